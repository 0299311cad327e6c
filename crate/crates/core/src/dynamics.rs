//! Benchmark systems, fixed-step RK4 integration, synthetic data generation
//! and finite-difference derivative estimates.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dictionary::{DictionarySpec, Feature};
use crate::error::{Error, Result};
use crate::network::NormalizationRecord;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    LinearOscillator,
    CubicOscillator,
    FitzHughNagumo,
    Lorenz,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::LinearOscillator,
        Benchmark::CubicOscillator,
        Benchmark::FitzHughNagumo,
        Benchmark::Lorenz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::LinearOscillator => "linear_oscillator",
            Benchmark::CubicOscillator => "cubic_oscillator",
            Benchmark::FitzHughNagumo => "fitzhugh_nagumo",
            Benchmark::Lorenz => "lorenz",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn system(self) -> OdeSystem {
        OdeSystem::benchmark(self)
    }
}

/// A polynomial vector field given as a list of `(equation, feature label,
/// coefficient)` terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSystem {
    pub name: String,
    pub state_dim: usize,
    pub parameters: Vec<(String, f64)>,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub equation: usize,
    pub label: String,
    pub coefficient: f64,
}

fn term(equation: usize, label: &str, coefficient: f64) -> Term {
    Term {
        equation,
        label: label.to_string(),
        coefficient,
    }
}

impl OdeSystem {
    pub fn benchmark(b: Benchmark) -> Self {
        let (state_dim, parameters, terms) = match b {
            Benchmark::LinearOscillator => (
                2,
                vec![],
                vec![term(0, "x1", -0.1), term(0, "x2", 2.0), term(1, "x1", -2.0), term(1, "x2", -0.1)],
            ),
            Benchmark::CubicOscillator => (
                2,
                vec![],
                vec![
                    term(0, "x1^3", -0.1),
                    term(0, "x2^3", 2.0),
                    term(1, "x1^3", -2.0),
                    term(1, "x2^3", -0.1),
                ],
            ),
            Benchmark::FitzHughNagumo => (
                2,
                vec![],
                vec![
                    term(0, "1", 0.1),
                    term(0, "x1", 1.0),
                    term(0, "x2", -1.0),
                    term(0, "x1^3", -1.0 / 3.0),
                    term(1, "x1", 0.1),
                    term(1, "x2", -0.1),
                ],
            ),
            Benchmark::Lorenz => {
                let (gamma, rho, beta) = (10.0, 28.0, 8.0 / 3.0);
                (
                    3,
                    vec![("gamma".into(), gamma), ("rho".into(), rho), ("beta".into(), beta)],
                    vec![
                        term(0, "x1", -gamma),
                        term(0, "x2", gamma),
                        term(1, "x1", rho),
                        term(1, "x2", -1.0),
                        term(1, "x1*x3", -1.0),
                        term(2, "x3", -beta),
                        term(2, "x1*x2", 1.0),
                    ],
                )
            }
        };
        Self {
            name: b.name().to_string(),
            state_dim,
            parameters,
            terms,
        }
    }

    /// Right-hand side in unscaled coordinates.
    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        for t in &self.terms {
            let f = Feature::parse(&t.label, self.state_dim).expect("benchmark labels are canonical");
            out[t.equation] += t.coefficient * f.eval(x);
        }
        out
    }

    /// Coefficient matrix of the system in coordinates scaled by `alpha`.
    ///
    /// A monomial of total degree `p` picks up a factor `alpha^(1 - p)`.
    pub fn ground_truth(&self, spec: &DictionarySpec, alpha: f64) -> Result<Tensor> {
        if spec.state_dim != self.state_dim {
            return Err(Error::invalid(format!(
                "dictionary has {} states, system {} has {}",
                spec.state_dim, self.name, self.state_dim
            )));
        }
        let labels = spec.labels();
        let mut xi = Tensor::zeros(labels.len(), self.state_dim);
        for t in &self.terms {
            let row = labels
                .iter()
                .position(|l| *l == t.label)
                .ok_or_else(|| Error::invalid(format!("dictionary lacks term {} needed by {}", t.label, self.name)))?;
            let degree = match Feature::parse(&t.label, self.state_dim)? {
                Feature::Monomial(e) => e.iter().sum::<u32>() as i32,
                _ => 1,
            };
            xi.set(row, t.equation, t.coefficient * alpha.powi(1 - degree));
        }
        Ok(xi)
    }
}

/// One classical RK4 step of size `h`.
pub fn rk4_step(f: &mut impl FnMut(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let shifted = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let a1 = f(x);
    let a2 = f(&shifted(x, &a1, h / 2.0));
    let a3 = f(&shifted(x, &a2, h / 2.0));
    let a4 = f(&shifted(x, &a3, h));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]))
        .collect()
}

fn check_increasing(times: &[f64]) -> Result<()> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("times must be strictly increasing"));
    }
    Ok(())
}

/// Marches RK4 over `times`, one step per consecutive pair. Row `k` of the
/// result is the state at `times[k]`.
pub fn integrate_rk4_fixed(mut f: impl FnMut(&[f64]) -> Vec<f64>, x0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_increasing(times)?;
    let mut out = Vec::with_capacity(times.len());
    if times.is_empty() {
        return Ok(out);
    }
    let mut checked = |x: &[f64], step: usize| -> Result<Vec<f64>> {
        let v = f(x);
        if v.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step,
                detail: format!("vector field returned {v:?} at state {x:?}"),
            });
        }
        Ok(v)
    };
    out.push(x0.to_vec());
    for k in 0..times.len() - 1 {
        let h = times[k + 1] - times[k];
        let x = &out[k];
        let mut err = None;
        let next = rk4_step(
            &mut |s| match checked(s, k) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    vec![0.0; s.len()]
                }
            },
            x,
            h,
        );
        if let Some(e) = err {
            return Err(e);
        }
        out.push(next);
    }
    Ok(out)
}

/// `n` equidistant points from `t0` to `t1` inclusive.
pub fn linspace(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![t0];
    }
    let h = (t1 - t0) / (n - 1) as f64;
    (0..n).map(|k| if k == n - 1 { t1 } else { t0 + k as f64 * h }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Initial state in recorded (alpha-scaled) units.
    pub initial_condition: Vec<f64>,
    pub times: Vec<f64>,
    pub clean: Tensor,
    pub noise: Tensor,
    /// `clean + noise`.
    pub noisy: Tensor,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub system: String,
    pub state_dim: usize,
    pub trajectories: Vec<Trajectory>,
    pub sigma: f64,
    pub alpha: f64,
    pub seed: u64,
    pub normalization: NormalizationRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub t_span: (f64, f64),
    pub samples: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Internal RK4 steps per output interval.
    pub refine: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            t_span: (0.0, 10.0),
            samples: 400,
            sigma: 0.0,
            alpha: 1.0,
            seed: 0,
            refine: 10,
        }
    }
}

/// Integrates `system` from each initial condition, scales by alpha and adds
/// i.i.d. Gaussian noise. Trajectory `j` draws its noise from
/// `SplitMix64::substream(seed, j)`, sample-major then channel.
pub fn generate_dataset(system: &OdeSystem, initial_conditions: &[Vec<f64>], opts: &GenerateOptions) -> Result<Dataset> {
    let (t0, t1) = opts.t_span;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::invalid(format!("invalid time span [{t0}, {t1}]")));
    }
    if opts.samples < 2 {
        return Err(Error::invalid("need at least 2 samples per trajectory"));
    }
    if !(opts.sigma >= 0.0) {
        return Err(Error::invalid("noise level must be non-negative"));
    }
    if !(opts.alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    if opts.refine == 0 {
        return Err(Error::invalid("refinement factor must be positive"));
    }
    if initial_conditions.is_empty() {
        return Err(Error::invalid("need at least one initial condition"));
    }
    let n = system.state_dim;
    let times = linspace(t0, t1, opts.samples);
    let fine = linspace(t0, t1, (opts.samples - 1) * opts.refine + 1);
    let mut trajectories = Vec::with_capacity(initial_conditions.len());
    for (j, ic) in initial_conditions.iter().enumerate() {
        if ic.len() != n {
            return Err(Error::invalid(format!("initial condition {j} has {} entries, expected {n}", ic.len())));
        }
        let path = integrate_rk4_fixed(|x| system.rhs(x), ic, &fine)?;
        let mut clean = Vec::with_capacity(opts.samples * n);
        for k in 0..opts.samples {
            clean.extend(path[k * opts.refine].iter().map(|v| v * opts.alpha));
        }
        let mut rng = SplitMix64::substream(opts.seed, j as u64);
        let noise: Vec<f64> = if opts.sigma > 0.0 {
            (0..clean.len()).map(|_| opts.sigma * rng.normal()).collect()
        } else {
            vec![0.0; clean.len()]
        };
        let noisy = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();
        trajectories.push(Trajectory {
            initial_condition: ic.iter().map(|v| v * opts.alpha).collect(),
            times: times.clone(),
            clean: Tensor::matrix(opts.samples, n, clean),
            noise: Tensor::matrix(opts.samples, n, noise),
            noisy: Tensor::matrix(opts.samples, n, noisy),
        });
    }
    let normalization = normalization_for(&trajectories, opts.alpha)?;
    Ok(Dataset {
        system: system.name.clone(),
        state_dim: n,
        trajectories,
        sigma: opts.sigma,
        alpha: opts.alpha,
        seed: opts.seed,
        normalization,
    })
}

/// Min–max record over the noisy states and times of all trajectories.
pub fn normalization_for(trajectories: &[Trajectory], alpha: f64) -> Result<NormalizationRecord> {
    let n = trajectories.first().map(|t| t.noisy.cols()).unwrap_or(0);
    let rows: usize = trajectories.iter().map(|t| t.len()).sum();
    let mut all = Vec::with_capacity(rows * n);
    let mut times = Vec::with_capacity(rows);
    for t in trajectories {
        all.extend_from_slice(t.noisy.values());
        times.extend_from_slice(&t.times);
    }
    NormalizationRecord::from_data(&times, &Tensor::matrix(rows, n, all), alpha)
}

/// Derivative at `t[m]` of the quadratic through three points.
fn three_point(t: [f64; 3], x: [f64; 3], m: usize) -> f64 {
    let [t0, t1, t2] = t;
    let tm = t[m];
    let l0 = ((tm - t1) + (tm - t2)) / ((t0 - t1) * (t0 - t2));
    let l1 = ((tm - t0) + (tm - t2)) / ((t1 - t0) * (t1 - t2));
    let l2 = ((tm - t0) + (tm - t1)) / ((t2 - t0) * (t2 - t1));
    l0 * x[0] + l1 * x[1] + l2 * x[2]
}

/// Second-order finite differences: centered in the interior, one-sided at
/// both ends. Exact for quadratics on any strictly increasing grid.
pub fn finite_difference(times: &[f64], states: &Tensor) -> Result<Tensor> {
    let m = times.len();
    if m < 3 {
        return Err(Error::invalid("finite differences need at least 3 samples"));
    }
    if states.rows() != m {
        return Err(Error::invalid("states and times have different lengths"));
    }
    check_increasing(times)?;
    let n = states.cols();
    let mut out = Tensor::zeros(m, n);
    for k in 0..m {
        let (base, at) = match k {
            0 => (0, 0),
            k if k == m - 1 => (m - 3, 2),
            k => (k - 1, 1),
        };
        let t = [times[base], times[base + 1], times[base + 2]];
        for i in 0..n {
            let x = [states.get(base, i), states.get(base + 1, i), states.get(base + 2, i)];
            out.set(k, i, three_point(t, x, at));
        }
    }
    Ok(out)
}

/// Finite-difference derivative estimates of every trajectory's noisy states.
pub fn finite_difference_derivatives(dataset: &Dataset) -> Result<Vec<Tensor>> {
    dataset
        .trajectories
        .iter()
        .map(|t| finite_difference(&t.times, &t.noisy))
        .collect()
}

/// JSON sidecar accompanying a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub system: String,
    pub state_dim: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub seed: u64,
    pub initial_conditions: Vec<Vec<f64>>,
    pub normalization: NormalizationRecord,
}

impl Dataset {
    pub fn total_samples(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn sidecar(&self) -> DatasetSidecar {
        DatasetSidecar {
            system: self.system.clone(),
            state_dim: self.state_dim,
            sigma: self.sigma,
            alpha: self.alpha,
            seed: self.seed,
            initial_conditions: self.trajectories.iter().map(|t| t.initial_condition.clone()).collect(),
            normalization: self.normalization.clone(),
        }
    }

    /// CSV with header `traj_id,t,y1..yn,x1..xn` (noisy then clean).
    pub fn to_csv(&self) -> String {
        let n = self.state_dim;
        let mut s = String::from("traj_id,t");
        for i in 1..=n {
            write!(s, ",y{i}").unwrap();
        }
        for i in 1..=n {
            write!(s, ",x{i}").unwrap();
        }
        s.push('\n');
        for (j, tr) in self.trajectories.iter().enumerate() {
            for k in 0..tr.len() {
                write!(s, "{j},{}", tr.times[k]).unwrap();
                for v in tr.noisy.row_slice(k).iter().chain(tr.clean.row_slice(k)) {
                    write!(s, ",{v}").unwrap();
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_csv(csv: &str, sidecar: &DatasetSidecar) -> Result<Self> {
        let n = sidecar.state_dim;
        let mut lines = csv.lines();
        let header = lines.next().ok_or_else(|| Error::invalid("empty dataset csv"))?;
        if header.split(',').count() != 2 + 2 * n {
            return Err(Error::invalid(format!("dataset header {header:?} does not match {n} states")));
        }
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (ln, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let mut fields = line.split(',');
            let id: usize = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad traj_id on data line {}", ln + 1)))?;
            let vals: Vec<f64> = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("data line {}: {e}", ln + 1)))?;
            if vals.len() != 1 + 2 * n {
                return Err(Error::invalid(format!("data line {} has {} fields", ln + 1, vals.len() + 1)));
            }
            rows.push((id, vals));
        }
        let count = rows.iter().map(|(id, _)| id + 1).max().unwrap_or(0);
        let mut trajectories = Vec::with_capacity(count);
        for j in 0..count {
            let mine: Vec<&Vec<f64>> = rows.iter().filter(|(id, _)| *id == j).map(|(_, v)| v).collect();
            let m = mine.len();
            let times: Vec<f64> = mine.iter().map(|v| v[0]).collect();
            check_increasing(&times)?;
            let noisy: Vec<f64> = mine.iter().flat_map(|v| v[1..1 + n].iter().copied()).collect();
            let clean: Vec<f64> = mine.iter().flat_map(|v| v[1 + n..].iter().copied()).collect();
            let noise = noisy.iter().zip(&clean).map(|(y, x)| y - x).collect();
            trajectories.push(Trajectory {
                initial_condition: sidecar
                    .initial_conditions
                    .get(j)
                    .cloned()
                    .unwrap_or_else(|| clean[..n].to_vec()),
                times,
                clean: Tensor::matrix(m, n, clean),
                noise: Tensor::matrix(m, n, noise),
                noisy: Tensor::matrix(m, n, noisy),
            });
        }
        Ok(Self {
            system: sidecar.system.clone(),
            state_dim: n,
            trajectories,
            sigma: sidecar.sigma,
            alpha: sidecar.alpha,
            seed: sidecar.seed,
            normalization: sidecar.normalization.clone(),
        })
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&self.sidecar())? + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let csv = std::fs::read_to_string(dir.join(format!("{stem}.csv")))?;
        let sidecar: DatasetSidecar = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        Self::from_csv(&csv, &sidecar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_keeps_state() {
        let times = linspace(0.0, 1.0, 11);
        let path = integrate_rk4_fixed(|x| vec![0.0; x.len()], &[1.5, -2.0], &times).unwrap();
        assert!(path.iter().all(|x| x == &[1.5, -2.0]));
    }

    #[test]
    fn exponential_one_step() {
        let path = integrate_rk4_fixed(|x| x.to_vec(), &[1.0], &[0.0, 0.1]).unwrap();
        let want = 1.0 + 0.1 + 0.005 + 1e-3 / 6.0 + 1e-4 / 24.0;
        assert!((path[1][0] - want).abs() < 1e-15);
        assert!((path[1][0] - 1.105_170_833_333_333_3).abs() < 1e-15);
    }

    #[test]
    fn nan_reports_step() {
        let times = linspace(0.0, 1.0, 5);
        let err = integrate_rk4_fixed(|x| if x[0] > 1.3 { vec![f64::NAN] } else { vec![1.0] }, &[1.0], &times).unwrap_err();
        match err {
            Error::NonFinite { step, .. } => assert_eq!(step, 1),
            other => panic!("unexpected {other}"),
        }
        assert!(integrate_rk4_fixed(|x| x.to_vec(), &[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn ground_truth_reproduces_rhs() {
        let mut rng = SplitMix64::new(3);
        for b in Benchmark::ALL {
            let sys = b.system();
            let degree = if b == Benchmark::LinearOscillator || b == Benchmark::Lorenz { 2 } else { 3 };
            let spec = DictionarySpec::polynomial(sys.state_dim, degree);
            for alpha in [1.0, 0.1] {
                let xi = sys.ground_truth(&spec, alpha).unwrap();
                for _ in 0..100 {
                    let x: Vec<f64> = (0..sys.state_dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
                    let got = spec.apply(&x, &xi).unwrap();
                    // alpha-scaled field: alpha * f(x / alpha)
                    let unscaled: Vec<f64> = x.iter().map(|v| v / alpha).collect();
                    let want: Vec<f64> = sys.rhs(&unscaled).iter().map(|v| v * alpha).collect();
                    for (g, w) in got.iter().zip(&want) {
                        assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{b:?}: {g} vs {w}");
                    }
                }
            }
        }
    }

    #[test]
    fn ground_truth_needs_terms() {
        let sys = Benchmark::CubicOscillator.system();
        assert!(sys.ground_truth(&DictionarySpec::polynomial(2, 2), 1.0).is_err());
    }

    fn opts(samples: usize, sigma: f64, alpha: f64, seed: u64) -> GenerateOptions {
        GenerateOptions {
            samples,
            sigma,
            alpha,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_dataset_is_clean() {
        let sys = Benchmark::LinearOscillator.system();
        let d = generate_dataset(&sys, &[vec![2.0, 0.0]], &opts(50, 0.0, 1.0, 1)).unwrap();
        let tr = &d.trajectories[0];
        assert_eq!(tr.noisy, tr.clean);
        let steps: Vec<f64> = tr.times.windows(2).map(|w| w[1] - w[0]).collect();
        let h0 = steps[0];
        assert!(steps.iter().all(|h| (h - h0).abs() < 1e-12));
    }

    #[test]
    fn noise_statistics() {
        let sys = Benchmark::LinearOscillator.system();
        let d = generate_dataset(&sys, &[vec![2.0, 0.0]], &opts(400, 0.02, 1.0, 42)).unwrap();
        let tr = &d.trajectories[0];
        let eps = tr.noise.values();
        assert_eq!(eps.len(), 800);
        let mean = eps.iter().sum::<f64>() / 800.0;
        let sd = (eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 799.0).sqrt();
        assert!((sd - 0.02).abs() < 0.002, "sd {sd}");
        for (k, ((y, x), e)) in tr.noisy.values().iter().zip(tr.clean.values()).zip(eps).enumerate() {
            assert_eq!(*y, x + e, "entry {k}");
        }
    }

    #[test]
    fn alpha_scales_clean_states_exactly() {
        let sys = Benchmark::Lorenz.system();
        let ic = [vec![-8.0, 7.0, 27.0]];
        let a = generate_dataset(&sys, &ic, &opts(100, 0.0, 1.0, 0)).unwrap();
        let b = generate_dataset(&sys, &ic, &opts(100, 0.0, 0.1, 0)).unwrap();
        for (x1, x01) in a.trajectories[0].clean.values().iter().zip(b.trajectories[0].clean.values()) {
            assert_eq!(x1 * 0.1, *x01);
        }
    }

    #[test]
    fn generation_is_reproducible_and_validated() {
        let sys = Benchmark::CubicOscillator.system();
        let ics = [vec![2.0, 2.0], vec![-2.0, -2.0]];
        let a = generate_dataset(&sys, &ics, &opts(80, 0.04, 1.0, 9)).unwrap();
        let b = generate_dataset(&sys, &ics, &opts(80, 0.04, 1.0, 9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.trajectories[0].noise, a.trajectories[1].noise);
        assert!(generate_dataset(&sys, &ics, &opts(1, 0.0, 1.0, 0)).is_err());
        let mut bad = opts(10, 0.0, 1.0, 0);
        bad.t_span = (1.0, 1.0);
        assert!(generate_dataset(&sys, &ics, &bad).is_err());
    }

    #[test]
    fn finite_differences() {
        let t = linspace(0.0, 2.0, 21);
        let lin = Tensor::column(t.clone());
        let d = finite_difference(&t, &lin).unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-10));

        let sq = Tensor::column(t.iter().map(|v| v * v).collect());
        let d = finite_difference(&t, &sq).unwrap();
        for (k, v) in d.values().iter().enumerate() {
            assert!((v - 2.0 * t[k]).abs() < 1e-10);
        }

        let ts = linspace(0.0, 3.0, 301);
        let s = Tensor::column(ts.iter().map(|v| v.sin()).collect());
        let d = finite_difference(&ts, &s).unwrap();
        let err: Vec<f64> = d.values().iter().zip(&ts).map(|(v, t)| (v - t.cos()).abs()).collect();
        // centered stencil: h^2/6 max|f'''|; one-sided ends: h^2/3 max|f'''|
        let interior = err[1..300].iter().fold(0.0, |m: f64, e| m.max(*e));
        assert!(interior <= 2e-5, "interior error {interior}");
        assert!(err[0] <= 1e-4 / 3.0 + 1e-9 && err[300] <= 1e-4 / 3.0 + 1e-9, "{} {}", err[0], err[300]);

        assert!(finite_difference(&[0.0, 1.0], &Tensor::column(vec![0.0, 1.0])).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let sys = Benchmark::LinearOscillator.system();
        let d = generate_dataset(&sys, &[vec![2.0, 0.0], vec![-1.0, 1.0]], &opts(20, 0.02, 1.0, 5)).unwrap();
        let csv = d.to_csv();
        assert!(csv.starts_with("traj_id,t,y1,y2,x1,x2\n"));
        assert_eq!(csv.lines().count(), 41);
        let back = Dataset::from_csv(&csv, &d.sidecar()).unwrap();
        for (a, b) in d.trajectories.iter().zip(&back.trajectories) {
            assert_eq!(a.noisy, b.noisy);
            assert_eq!(a.clean, b.clean);
            assert_eq!(a.times, b.times);
        }
    }
}
