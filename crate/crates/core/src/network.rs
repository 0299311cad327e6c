//! Sine-activated MLP representing a trajectory (or a family of trajectories
//! keyed by initial condition) as a smooth function of time.

use serde::{Deserialize, Serialize};

use crate::autodiff::{DualNode, DualValue, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Affine layer `x · W + b`, with `W` stored `[fan_in, fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirenNetwork {
    pub layers: Vec<Layer>,
    /// Frequency applied before the first sine.
    pub omega_first: f64,
    /// Frequency applied before every later sine.
    pub omega_hidden: f64,
}

/// Tape handles of a network's parameters, in layer order.
#[derive(Debug, Clone)]
pub struct SirenParams {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

pub const DEFAULT_OMEGA_FIRST: f64 = 30.0;
pub const DEFAULT_OMEGA_HIDDEN: f64 = 30.0;

impl SirenNetwork {
    /// Builds a network with layer widths `dims` (input first, output last).
    ///
    /// First-layer weights are drawn from `U(-1/fan_in, 1/fan_in)`, all later
    /// weights from `U(-sqrt(6/fan_in)/omega_hidden, +sqrt(6/fan_in)/omega_hidden)`,
    /// biases from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(dims: &[usize], omega_first: f64, omega_hidden: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("invalid layer sizes {dims:?}")));
        }
        if !(omega_first > 0.0 && omega_hidden > 0.0) {
            return Err(Error::invalid("frequencies must be positive"));
        }
        let mut rng = SplitMix64::new(seed);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = if l == 0 {
                    1.0 / fan_in as f64
                } else {
                    (6.0 / fan_in as f64).sqrt() / omega_hidden
                };
                let weights = (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect();
                let b = 1.0 / (fan_in as f64).sqrt();
                let bias = (0..fan_out).map(|_| rng.uniform(-b, b)).collect();
                Layer {
                    weights: Tensor::matrix(fan_in, fan_out, weights),
                    bias: Tensor::row(bias),
                }
            })
            .collect();
        Ok(Self {
            layers,
            omega_first,
            omega_hidden,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::fan_out).unwrap_or(0)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Layer::fan_out));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite() && l.bias.is_finite())
    }

    fn omega(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.omega_first
        } else {
            self.omega_hidden
        }
    }

    pub fn register(&self, tape: &mut Tape) -> Result<SirenParams> {
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            weights.push(tape.param(layer.weights.clone())?);
            biases.push(tape.param(layer.bias.clone())?);
        }
        Ok(SirenParams { weights, biases })
    }

    /// Records the network on `inputs` (`[rows, input_dim]`), carrying the
    /// tangent of every layer along the direction `tangent_seed`.
    pub fn record(&self, tape: &mut Tape, params: &SirenParams, inputs: NodeId, tangent_seed: NodeId) -> Result<DualNode> {
        let [_, cols] = tape.shape(inputs);
        if cols != self.input_dim() {
            return Err(Error::invalid(format!(
                "network expects {} inputs, got {cols}",
                self.input_dim()
            )));
        }
        let mut h = DualNode {
            primal: inputs,
            tangent: tangent_seed,
        };
        let last = self.layers.len() - 1;
        for l in 0..self.layers.len() {
            let z = tape.dual_matmul(h, params.weights[l])?;
            let z = tape.dual_add_const(z, params.biases[l])?;
            h = if l == last { z } else { tape.dual_sin_scaled(z, self.omega(l))? };
        }
        Ok(h)
    }

    /// Network output and its derivative along the time input (column 0),
    /// for a batch of `[rows, input_dim]` inputs.
    pub fn predict_batch(&self, inputs: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let params = self.register(&mut tape)?;
        let x = tape.constant(inputs.clone())?;
        let seed = tape.constant(time_tangent_seed(inputs.rows(), inputs.cols()))?;
        let out = self.record(&mut tape, &params, x, seed)?;
        tape.forward(&[])?;
        Ok((
            tape.value(out.primal).cloned().expect("evaluated"),
            tape.value(out.tangent).cloned().expect("evaluated"),
        ))
    }

    /// Pointwise prediction in normalized units, with the exact derivative
    /// with respect to normalized time in each tangent.
    ///
    /// `y0_norm` must be given exactly when the network was built with
    /// initial-condition inputs.
    pub fn predict(&self, t_norm: f64, y0_norm: Option<&[f64]>) -> Result<Vec<DualValue>> {
        let mut h: Vec<DualValue> = vec![DualValue::variable(t_norm)];
        if let Some(y0) = y0_norm {
            h.extend(y0.iter().map(|&v| DualValue::constant(v)));
        }
        if h.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "network expects {} inputs, got {} (initial condition {})",
                self.input_dim(),
                h.len(),
                if y0_norm.is_some() { "given" } else { "missing" }
            )));
        }
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z: Vec<DualValue> = layer.bias.values().iter().map(|&b| DualValue::constant(b)).collect();
            for (i, hi) in h.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj = *zj + hi.scale(layer.weights.get(i, j));
                }
            }
            h = if l == last {
                z
            } else {
                let w = self.omega(l);
                z.into_iter().map(|v| v.scale(w).sin()).collect()
            };
        }
        Ok(h)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            omega_first: self.omega_first,
            omega_hidden: self.omega_hidden,
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    shape: [l.fan_in(), l.fan_out()],
                    weights: l.weights.values().to_vec(),
                    bias: l.bias.values().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!("unknown checkpoint format {:?}", ck.format)));
        }
        let mut layers = Vec::with_capacity(ck.layers.len());
        for (i, l) in ck.layers.iter().enumerate() {
            let [fi, fo] = l.shape;
            if l.weights.len() != fi * fo || l.bias.len() != fo {
                return Err(Error::invalid(format!("checkpoint layer {i} does not match its shape header")));
            }
            if let Some(prev) = layers.last().map(|p: &Layer| p.fan_out()) {
                if prev != fi {
                    return Err(Error::invalid(format!("checkpoint layer {i} does not chain")));
                }
            }
            layers.push(Layer {
                weights: Tensor::matrix(fi, fo, l.weights.clone()),
                bias: Tensor::row(l.bias.clone()),
            });
        }
        if layers.is_empty() {
            return Err(Error::invalid("checkpoint has no layers"));
        }
        Ok(Self {
            layers,
            omega_first: ck.omega_first,
            omega_hidden: ck.omega_hidden,
        })
    }
}

/// `[rows, cols]` tangent direction selecting the time column.
pub fn time_tangent_seed(rows: usize, cols: usize) -> Tensor {
    let mut t = Tensor::zeros(rows, cols);
    for r in 0..rows {
        t.set(r, 0, 1.0);
    }
    t
}

pub const CHECKPOINT_FORMAT: &str = "siren-checkpoint-v1";

/// JSON parameter checkpoint: layers in order, each with a `[fan_in, fan_out]`
/// header and row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub omega_first: f64,
    pub omega_hidden: f64,
    pub layers: Vec<CheckpointLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub shape: [usize; 2],
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Min–max map of every channel onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub state_min: Vec<f64>,
    pub state_max: Vec<f64>,
    pub time_min: f64,
    pub time_max: f64,
    /// Initial-condition inputs share the state channels' ranges.
    pub ic_min: Vec<f64>,
    pub ic_max: Vec<f64>,
    /// Uniform state scaling applied before the data were recorded.
    pub alpha: f64,
}

fn to_unit(v: f64, lo: f64, hi: f64) -> f64 {
    2.0 * (v - lo) / (hi - lo) - 1.0
}

fn from_unit(v: f64, lo: f64, hi: f64) -> f64 {
    lo + (v + 1.0) * (hi - lo) / 2.0
}

impl NormalizationRecord {
    pub fn new(state_min: Vec<f64>, state_max: Vec<f64>, time_min: f64, time_max: f64, alpha: f64) -> Result<Self> {
        if state_min.len() != state_max.len() || state_min.is_empty() {
            return Err(Error::invalid("state ranges must have matching, non-zero length"));
        }
        for (i, (lo, hi)) in state_min.iter().zip(&state_max).enumerate() {
            if !(hi > lo) {
                return Err(Error::invalid(format!("degenerate range for state {}: [{lo}, {hi}]", i + 1)));
            }
        }
        if !(time_max > time_min) {
            return Err(Error::invalid(format!("degenerate time range [{time_min}, {time_max}]")));
        }
        if !(alpha > 0.0) {
            return Err(Error::invalid("alpha must be positive"));
        }
        Ok(Self {
            ic_min: state_min.clone(),
            ic_max: state_max.clone(),
            state_min,
            state_max,
            time_min,
            time_max,
            alpha,
        })
    }

    /// Ranges covering all rows of `states` (`[rows, n]`) and all `times`.
    pub fn from_data(times: &[f64], states: &Tensor, alpha: f64) -> Result<Self> {
        let n = states.cols();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for r in 0..states.rows() {
            for (i, &v) in states.row_slice(r).iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        let tmin = times.iter().copied().fold(f64::INFINITY, f64::min);
        let tmax = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi, tmin, tmax, alpha)
    }

    pub fn state_dim(&self) -> usize {
        self.state_min.len()
    }

    pub fn normalize_time(&self, t: f64) -> f64 {
        to_unit(t, self.time_min, self.time_max)
    }

    pub fn denormalize_time(&self, t: f64) -> f64 {
        from_unit(t, self.time_min, self.time_max)
    }

    pub fn normalize_state(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| to_unit(v, self.state_min[i], self.state_max[i]))
            .collect()
    }

    pub fn denormalize_state(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| from_unit(v, self.state_min[i], self.state_max[i]))
            .collect()
    }

    pub fn normalize_ic(&self, y0: &[f64]) -> Vec<f64> {
        y0.iter()
            .enumerate()
            .map(|(i, &v)| to_unit(v, self.ic_min[i], self.ic_max[i]))
            .collect()
    }

    pub fn half_range(&self, channel: usize) -> f64 {
        (self.state_max[channel] - self.state_min[channel]) / 2.0
    }

    /// Chain-rule factor from `d x_norm / d t_norm` to `d x / d t` for one channel.
    pub fn derivative_factor(&self, channel: usize) -> f64 {
        self.half_range(channel) * 2.0 / (self.time_max - self.time_min)
    }

    pub fn normalize_derivative(&self, dx: &[f64]) -> Vec<f64> {
        dx.iter()
            .enumerate()
            .map(|(i, &v)| v / self.derivative_factor(i))
            .collect()
    }

    /// Maps a normalized prediction and its normalized-time derivative to
    /// physical units.
    pub fn denormalize_state_and_derivative(&self, x_norm: &[f64], dx_norm: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.state_dim();
        if x_norm.len() != n || dx_norm.len() != n {
            return Err(Error::invalid(format!(
                "record has {n} channels, got {} states and {} derivatives",
                x_norm.len(),
                dx_norm.len()
            )));
        }
        let dx = dx_norm
            .iter()
            .enumerate()
            .map(|(i, &v)| v * self.derivative_factor(i))
            .collect();
        Ok((self.denormalize_state(x_norm), dx))
    }
}
