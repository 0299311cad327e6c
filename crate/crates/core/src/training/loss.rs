//! Loss terms. Each `record_*` function appends a scalar node to a tape; the
//! `loss_*` functions evaluate the same graphs on plain tensors.

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::dictionary::DictionarySpec;
use crate::error::{Error, Result};

/// Consecutive sample pairs `(k, k + 1)` of stacked trajectories. Pairs never
/// straddle two trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPairs {
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub h: Vec<f64>,
}

impl StepPairs {
    /// Pairs for trajectories stacked in order, one time grid each.
    pub fn new<'a>(grids: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut pairs = StepPairs {
            from: Vec::new(),
            to: Vec::new(),
            h: Vec::new(),
        };
        let mut offset = 0;
        for times in grids {
            for k in 0..times.len().saturating_sub(1) {
                let h = times[k + 1] - times[k];
                if !(h > 0.0) {
                    return Err(Error::invalid(format!("step {} has non-positive size {h}", offset + k)));
                }
                pairs.from.push(offset + k);
                pairs.to.push(offset + k + 1);
                pairs.h.push(h);
            }
            offset += times.len();
        }
        Ok(pairs)
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// The same pairs with every step multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            h: self.h.iter().map(|h| h * factor).collect(),
            ..self.clone()
        }
    }
}

fn mean_row_norm(tape: &mut Tape, residual: NodeId) -> NodeId {
    let rows = tape.shape(residual)[0];
    let sq = tape.square(residual);
    let total = tape.sum(sq);
    tape.scale(total, 1.0 / rows as f64)
}

fn same_shape(tape: &Tape, a: NodeId, b: NodeId, what: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::invalid(format!(
            "{what}: shapes {:?} and {:?} differ",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    Ok(())
}

/// `(1/N) Σ_k ‖y_k − x̂_k‖²` over all rows.
pub fn record_mse(tape: &mut Tape, pred: NodeId, data: NodeId) -> Result<NodeId> {
    same_shape(tape, pred, data, "mse")?;
    let r = tape.sub(data, pred)?;
    Ok(mean_row_norm(tape, r))
}

/// `(1/N) Σ_k ‖dx_k − Θ(x_k) Ξ‖²`.
pub fn record_deri(tape: &mut Tape, spec: &DictionarySpec, x: NodeId, dx: NodeId, xi: NodeId) -> Result<NodeId> {
    same_shape(tape, x, dx, "derivative loss")?;
    let f = spec.record_apply(tape, x, xi)?;
    let r = tape.sub(dx, f)?;
    Ok(mean_row_norm(tape, r))
}

/// One classical RK4 step of `ẋ = Θ(x) Ξ` from every row of `x`, with a
/// per-row step `h` (`[rows, 1]`).
pub fn record_rk4_step(tape: &mut Tape, spec: &DictionarySpec, x: NodeId, xi: NodeId, h: NodeId) -> Result<NodeId> {
    let half_h = tape.scale(h, 0.5);
    let k1 = spec.record_apply(tape, x, xi)?;
    let s = tape.mul(k1, half_h)?;
    let x2 = tape.add(x, s)?;
    let k2 = spec.record_apply(tape, x2, xi)?;
    let s = tape.mul(k2, half_h)?;
    let x3 = tape.add(x, s)?;
    let k3 = spec.record_apply(tape, x3, xi)?;
    let s = tape.mul(k3, h)?;
    let x4 = tape.add(x, s)?;
    let k4 = spec.record_apply(tape, x4, xi)?;
    let k23 = tape.add(k2, k3)?;
    let k23 = tape.scale(k23, 2.0);
    let k14 = tape.add(k1, k4)?;
    let ks = tape.add(k14, k23)?;
    let sixth = tape.scale(h, 1.0 / 6.0);
    let inc = tape.mul(ks, sixth)?;
    tape.add(x, inc)
}

/// `(1/P) Σ ‖(x̂_{k+1} − F_RK4(x̂_k, h_k)) / h_k‖²` over the pairs.
pub fn record_rk4(tape: &mut Tape, spec: &DictionarySpec, x: NodeId, xi: NodeId, pairs: &StepPairs) -> Result<NodeId> {
    if pairs.is_empty() {
        return Err(Error::invalid("one-step loss needs at least one pair"));
    }
    let rows = tape.shape(x)[0];
    if pairs.to.iter().any(|&k| k >= rows) {
        return Err(Error::invalid("step pairs index past the state rows"));
    }
    let from = tape.rows(x, pairs.from.clone())?;
    let to = tape.rows(x, pairs.to.clone())?;
    let h = tape.constant(Tensor::column(pairs.h.clone()))?;
    let inv_h = tape.constant(Tensor::column(pairs.h.iter().map(|h| 1.0 / h).collect()))?;
    let pred = record_rk4_step(tape, spec, from, xi, h)?;
    let r = tape.sub(to, pred)?;
    let r = tape.mul(r, inv_h)?;
    Ok(mean_row_norm(tape, r))
}

fn scalar_of(mut tape: Tape) -> Result<f64> {
    Ok(tape.forward(&[])?.item())
}

pub fn loss_mse(pred: &Tensor, data: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone())?;
    let d = tape.constant(data.clone())?;
    record_mse(&mut tape, p, d)?;
    scalar_of(tape)
}

pub fn loss_deri(dx: &Tensor, x: &Tensor, spec: &DictionarySpec, xi: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let xn = tape.constant(x.clone())?;
    let dn = tape.constant(dx.clone())?;
    let w = tape.constant(xi.clone())?;
    record_deri(&mut tape, spec, xn, dn, w)?;
    scalar_of(tape)
}

/// One-step loss of a single trajectory sampled at `times`.
pub fn loss_rk4(x: &Tensor, times: &[f64], spec: &DictionarySpec, xi: &Tensor) -> Result<f64> {
    if times.len() != x.rows() {
        return Err(Error::invalid("times and states differ in length"));
    }
    let pairs = StepPairs::new([times])?;
    let mut tape = Tape::new();
    let xn = tape.constant(x.clone())?;
    let w = tape.constant(xi.clone())?;
    record_rk4(&mut tape, spec, xn, w, &pairs)?;
    scalar_of(tape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_rk4_fixed, linspace, rk4_step, Benchmark};

    #[test]
    fn mse_examples() {
        let y = Tensor::column(vec![0.0, 0.0]);
        assert_eq!(loss_mse(&y, &y).unwrap(), 0.0);
        let x = Tensor::column(vec![1.0, 1.0]);
        assert_eq!(loss_mse(&x, &y).unwrap(), 1.0);
        let x2 = Tensor::column(vec![2.0, 2.0]);
        assert_eq!(loss_mse(&x2, &y).unwrap(), 4.0);
        assert!(loss_mse(&Tensor::column(vec![1.0]), &y).is_err());
    }

    fn linear_setup() -> (DictionarySpec, Tensor, Vec<f64>, Tensor) {
        let sys = Benchmark::LinearOscillator.system();
        let spec = DictionarySpec::polynomial(2, 2);
        let xi = sys.ground_truth(&spec, 1.0).unwrap();
        let times = linspace(0.0, 2.0, 41);
        let path = integrate_rk4_fixed(|x| sys.rhs(x), &[2.0, 0.0], &times).unwrap();
        let x = Tensor::matrix(41, 2, path.concat());
        (spec, xi, times, x)
    }

    #[test]
    fn deri_examples() {
        let (spec, xi, _, x) = linear_setup();
        let sys = Benchmark::LinearOscillator.system();
        let dx = Tensor::matrix(41, 2, (0..41).flat_map(|r| sys.rhs(x.row_slice(r))).collect());
        assert!(loss_deri(&dx, &x, &spec, &xi).unwrap() <= 1e-8);

        let zero = Tensor::zeros(6, 2);
        let want = dx.values().iter().map(|v| v * v).sum::<f64>() / 41.0;
        assert!((loss_deri(&dx, &x, &spec, &zero).unwrap() - want).abs() < 1e-12);

        // dx = ΘΞ, estimate 2Ξ: residual is -ΘΞ
        let doubled = xi.map(|v| 2.0 * v);
        assert!((loss_deri(&dx, &x, &spec, &doubled).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn rk4_examples() {
        let (spec, xi, times, x) = linear_setup();
        // the states were produced by the same RK4 map
        assert!(loss_rk4(&x, &times, &spec, &xi).unwrap() <= 1e-20);

        let zero = Tensor::zeros(6, 2);
        let mut want = 0.0;
        for k in 0..40 {
            let h = times[k + 1] - times[k];
            for i in 0..2 {
                want += ((x.get(k + 1, i) - x.get(k, i)) / h).powi(2);
            }
        }
        want /= 40.0;
        let got = loss_rk4(&x, &times, &spec, &zero).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn rk4_step_matches_direct_stepper() {
        let (spec, xi, _, _) = linear_setup();
        let sys = Benchmark::LinearOscillator.system();
        let x0 = [0.7, -1.3];
        let h = 0.05;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(x0.to_vec())).unwrap();
        let w = tape.constant(xi).unwrap();
        let hn = tape.constant(Tensor::scalar(h)).unwrap();
        record_rk4_step(&mut tape, &spec, x, w, hn).unwrap();
        let got = tape.forward(&[]).unwrap().values().to_vec();
        let want = rk4_step(&mut |x| sys.rhs(x), &x0, h);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn pairs_respect_boundaries() {
        let a = [0.0, 1.0, 2.0];
        let b = [0.0, 0.5];
        let p = StepPairs::new([&a[..], &b[..]]).unwrap();
        assert_eq!(p.from, [0, 1, 3]);
        assert_eq!(p.to, [1, 2, 4]);
        assert_eq!(p.h, [1.0, 1.0, 0.5]);
        assert!(StepPairs::new([&[0.0, 0.0][..]]).is_err());
        assert!(StepPairs::new([&[1.0, 0.0][..]]).is_err());
    }
}
