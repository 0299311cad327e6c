//! Joint training of the network and the sparse coefficients, plus the
//! network-free one-step baseline.

mod adam;
mod loss;

pub use adam::{adam_step, masked_adam_step, AdamConfig, AdamState};
pub use loss::{loss_deri, loss_mse, loss_rk4, record_deri, record_mse, record_rk4, record_rk4_step, StepPairs};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::dictionary::DictionarySpec;
use crate::dynamics::{Benchmark, Dataset};
use crate::error::{Error, PartialRun, Result};
use crate::network::{time_tangent_seed, SirenNetwork, SirenParams, DEFAULT_OMEGA_FIRST, DEFAULT_OMEGA_HIDDEN};
use crate::regression::CoefficientMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Network with all three loss terms.
    Ineural,
    /// Network with the derivative term only (`μ3 = 0`).
    DeriOnly,
    /// Network with the one-step term only (`μ2 = 0`).
    Rk4Only,
    /// One-step regression on the raw samples, no network.
    Rk4Direct,
    /// Sequentially thresholded least squares on finite differences.
    Stls,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ineural,
        Method::DeriOnly,
        Method::Rk4Only,
        Method::Rk4Direct,
        Method::Stls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ineural => "ineural",
            Method::DeriOnly => "deri_only",
            Method::Rk4Only => "rk4_only",
            Method::Rk4Direct => "rk4_direct",
            Method::Stls => "stls",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn uses_network(self) -> bool {
        matches!(self, Method::Ineural | Method::DeriOnly | Method::Rk4Only)
    }
}

/// Weights `(μ1, μ2, μ3)` of the data, derivative and one-step terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mse: f64,
    pub deri: f64,
    pub rk4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mse: 1.0,
            deri: 0.1,
            rk4: 0.1,
        }
    }
}

impl LossWeights {
    pub fn for_method(method: Method) -> Self {
        let d = Self::default();
        match method {
            Method::DeriOnly => Self { rk4: 0.0, ..d },
            Method::Rk4Only => Self { deri: 0.0, ..d },
            Method::Rk4Direct => Self {
                mse: 0.0,
                deri: 0.0,
                rk4: 1.0,
            },
            Method::Ineural | Method::Stls => d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu1", self.mse), ("mu2", self.deri), ("mu3", self.rk4)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if self.mse + self.deri + self.rk4 == 0.0 {
            return Err(Error::invalid("all loss weights are zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub max_iter: usize,
    /// Iterations before the first thresholding.
    pub init_iter: usize,
    /// Thresholding period after `init_iter`.
    pub q: usize,
    pub tol: f64,
    pub lr_net: f64,
    pub lr_xi: f64,
    /// Learning rates installed after every thresholding.
    pub reset_lr_net: f64,
    pub reset_lr_xi: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Trace sampling period; thresholding iterations and the last
    /// iteration are always kept.
    pub log_every: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self::for_benchmark(Benchmark::LinearOscillator)
    }
}

impl TrainSchedule {
    pub fn for_benchmark(b: Benchmark) -> Self {
        let (max_iter, init_iter, q, tol, lr_net, lr_xi) = match b {
            Benchmark::LinearOscillator => (15_000, 5_000, 2_000, 0.05, 1e-4, 1e-3),
            Benchmark::CubicOscillator => (30_000, 15_000, 5_000, 0.05, 1e-4, 1e-3),
            Benchmark::FitzHughNagumo => (50_000, 15_000, 5_000, 0.05, 1e-4, 1e-3),
            Benchmark::Lorenz => (35_000, 10_000, 3_000, 0.2, 7e-4, 1e-2),
        };
        Self {
            max_iter,
            init_iter,
            q,
            tol,
            lr_net,
            lr_xi,
            reset_lr_net: 5e-6,
            reset_lr_xi: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            log_every: 100,
        }
    }

    /// Short version of this schedule with `max_iter` updates: the first half
    /// is the initial phase and thresholding runs every quarter after that.
    /// Schedules already at most `max_iter` long are returned unchanged.
    pub fn shortened(&self, max_iter: usize) -> Self {
        if max_iter >= self.max_iter || max_iter < 4 {
            return self.clone();
        }
        Self {
            max_iter,
            init_iter: max_iter / 2,
            q: max_iter / 4,
            log_every: self.log_every.min(max_iter / 4),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.init_iter >= self.max_iter {
            return Err(Error::invalid(format!(
                "need 0 <= init_iter < max_iter, got {} and {}",
                self.init_iter, self.max_iter
            )));
        }
        if self.q == 0 || self.log_every == 0 {
            return Err(Error::invalid("q and log_every must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol must be non-negative"));
        }
        for lr in [self.lr_net, self.lr_xi, self.reset_lr_net, self.reset_lr_xi] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::invalid("learning rates must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// True if thresholding fires after update number `k` (1-based).
    pub fn thresholds_at(&self, k: usize) -> bool {
        k > self.init_iter && k % self.q == 0
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Coordinates the losses (and hence `Ξ`) live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpace {
    /// Recorded units: denormalized states and times.
    #[default]
    Physical,
    /// The `[-1, 1]` coordinates the network works in.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub omega_first: f64,
    pub omega_hidden: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32; 3],
            omega_first: DEFAULT_OMEGA_FIRST,
            omega_hidden: DEFAULT_OMEGA_HIDDEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub schedule: TrainSchedule,
    pub network: NetworkConfig,
    pub space: LossSpace,
    /// Seed of the network initialization.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            schedule: TrainSchedule::default(),
            network: NetworkConfig::default(),
            space: LossSpace::Physical,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub deri: f64,
    pub rk4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub loss: LossParts,
    pub active_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEvent {
    pub iteration: usize,
    /// Pruned entries as `(feature label, state name)`.
    pub pruned: Vec<(String, String)>,
}

/// Loss history of one run. Loss terms whose weight is zero are not
/// evaluated and read as 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    pub events: Vec<ThresholdEvent>,
}

impl TrainingTrace {
    /// CSV with header `iter,loss_total,loss_mse,loss_deri,loss_rk4,active_terms`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,loss_total,loss_mse,loss_deri,loss_rk4,active_terms\n");
        for r in &self.records {
            let l = &r.loss;
            writeln!(s, "{},{},{},{},{},{}", r.iter, l.total, l.mse, l.deri, l.rk4, r.active_terms).unwrap();
        }
        s
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Loss value and gradients at one parameter point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: LossParts,
    /// `(weights, bias)` gradients per layer; empty without a network.
    pub net_grads: Vec<(Tensor, Tensor)>,
    /// Gradient with respect to every entry of `Ξ`, masked or not.
    pub xi_grad: Tensor,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub coefficients: CoefficientMatrix,
    pub network: Option<SirenNetwork>,
    pub trace: TrainingTrace,
    pub space: LossSpace,
}

/// Fixed tensors of one training problem.
#[derive(Debug, Clone)]
struct Problem {
    spec: DictionarySpec,
    /// Network inputs, `None` for network-free regression.
    inputs: Option<Tensor>,
    /// Samples in loss coordinates.
    targets: Tensor,
    pairs: StepPairs,
    /// Per-channel `(half range, midpoint, derivative factor)` rows mapping
    /// network outputs to physical units.
    affine: Option<(Tensor, Tensor, Tensor)>,
}

impl Problem {
    fn new(dataset: &Dataset, spec: &DictionarySpec, with_network: bool, space: LossSpace) -> Result<Self> {
        spec.validate()?;
        let n = dataset.state_dim;
        if spec.state_dim != n {
            return Err(Error::invalid(format!(
                "dictionary has {} states, data have {n}",
                spec.state_dim
            )));
        }
        if dataset.trajectories.is_empty() {
            return Err(Error::invalid("dataset has no trajectories"));
        }
        if let Some(t) = dataset.trajectories.iter().find(|t| t.len() < 2) {
            return Err(Error::invalid(format!("trajectory with {} samples; need at least 2", t.len())));
        }
        let rec = &dataset.normalization;
        let rows = dataset.total_samples();
        let use_ic = dataset.trajectories.len() > 1;
        let in_dim = if use_ic { 1 + n } else { 1 };
        let mut inputs = Vec::with_capacity(rows * in_dim);
        let mut targets = Vec::with_capacity(rows * n);
        for tr in &dataset.trajectories {
            let y0 = rec.normalize_ic(tr.noisy.row_slice(0));
            for k in 0..tr.len() {
                inputs.push(rec.normalize_time(tr.times[k]));
                if use_ic {
                    inputs.extend_from_slice(&y0);
                }
                let y = tr.noisy.row_slice(k);
                match space {
                    LossSpace::Physical => targets.extend_from_slice(y),
                    LossSpace::Normalized => targets.extend(rec.normalize_state(y)),
                }
            }
        }
        let mut pairs = StepPairs::new(dataset.trajectories.iter().map(|t| t.times.as_slice()))?;
        if space == LossSpace::Normalized {
            pairs = pairs.scaled(2.0 / (rec.time_max - rec.time_min));
        }
        let affine = (with_network && space == LossSpace::Physical).then(|| {
            let half: Vec<f64> = (0..n).map(|i| rec.half_range(i)).collect();
            let mid: Vec<f64> = (0..n).map(|i| rec.state_min[i] + rec.half_range(i)).collect();
            let fac: Vec<f64> = (0..n).map(|i| rec.derivative_factor(i)).collect();
            (Tensor::row(half), Tensor::row(mid), Tensor::row(fac))
        });
        Ok(Self {
            spec: spec.clone(),
            inputs: with_network.then(|| Tensor::matrix(rows, in_dim, inputs)),
            targets: Tensor::matrix(rows, n, targets),
            pairs,
            affine,
        })
    }

    fn input_dim(&self) -> usize {
        self.inputs.as_ref().map_or(0, |t| t.cols())
    }
}

struct Recorded {
    params: Option<SirenParams>,
    xi: NodeId,
    total: NodeId,
    mse: Option<NodeId>,
    deri: Option<NodeId>,
    rk4: Option<NodeId>,
}

fn record_losses(
    tape: &mut Tape,
    problem: &Problem,
    weights: &LossWeights,
    net: Option<&SirenNetwork>,
    xi: &Tensor,
) -> Result<Recorded> {
    let xi_node = tape.param(xi.clone())?;
    let targets = tape.constant(problem.targets.clone())?;
    let (params, x, dx) = match (net, &problem.inputs) {
        (Some(net), Some(inputs)) => {
            let params = net.register(tape)?;
            let input = tape.constant(inputs.clone())?;
            let seed = tape.constant(time_tangent_seed(inputs.rows(), inputs.cols()))?;
            let out = net.record(tape, &params, input, seed)?;
            let (x, dx) = match &problem.affine {
                Some((half, mid, fac)) => {
                    let half = tape.constant(half.clone())?;
                    let mid = tape.constant(mid.clone())?;
                    let fac = tape.constant(fac.clone())?;
                    let x = tape.mul(out.primal, half)?;
                    let x = tape.add(x, mid)?;
                    (x, tape.mul(out.tangent, fac)?)
                }
                None => (out.primal, out.tangent),
            };
            (Some(params), x, Some(dx))
        }
        (None, None) => (None, targets, None),
        _ => return Err(Error::invalid("network and problem disagree")),
    };
    let mse = (weights.mse > 0.0 && params.is_some())
        .then(|| record_mse(tape, x, targets))
        .transpose()?;
    let deri = match dx {
        Some(dx) if weights.deri > 0.0 => Some(record_deri(tape, &problem.spec, x, dx, xi_node)?),
        _ => None,
    };
    let rk4 = (weights.rk4 > 0.0)
        .then(|| record_rk4(tape, &problem.spec, x, xi_node, &problem.pairs))
        .transpose()?;
    let mut terms = Vec::new();
    for (node, w) in [(mse, weights.mse), (deri, weights.deri), (rk4, weights.rk4)] {
        if let Some(node) = node {
            terms.push(tape.scale(node, w));
        }
    }
    let mut total = *terms.first().ok_or_else(|| Error::invalid("no loss term is active"))?;
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(Recorded {
        params,
        xi: xi_node,
        total,
        mse,
        deri,
        rk4,
    })
}

/// Stepwise driver for one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    problem: Problem,
    weights: LossWeights,
    schedule: TrainSchedule,
    space: LossSpace,
    net: Option<SirenNetwork>,
    xi: CoefficientMatrix,
    net_state: Vec<(AdamState, AdamState)>,
    xi_state: AdamState,
    lr_net: f64,
    lr_xi: f64,
    iteration: usize,
    trace: TrainingTrace,
}

impl Trainer {
    /// Joint network and coefficient training.
    pub fn new(dataset: &Dataset, spec: &DictionarySpec, config: &TrainConfig) -> Result<Self> {
        config.weights.validate()?;
        let problem = Problem::new(dataset, spec, true, config.space)?;
        let mut dims = vec![problem.input_dim()];
        dims.extend_from_slice(&config.network.hidden);
        dims.push(dataset.state_dim);
        let net = SirenNetwork::init(&dims, config.network.omega_first, config.network.omega_hidden, config.seed)?;
        Self::build(problem, config.weights, config.schedule.clone(), config.space, Some(net))
    }

    /// Coefficient-only regression on the one-step loss of the raw samples.
    pub fn direct(dataset: &Dataset, spec: &DictionarySpec, schedule: &TrainSchedule, space: LossSpace) -> Result<Self> {
        let problem = Problem::new(dataset, spec, false, space)?;
        Self::build(problem, LossWeights::for_method(Method::Rk4Direct), schedule.clone(), space, None)
    }

    fn build(
        problem: Problem,
        weights: LossWeights,
        schedule: TrainSchedule,
        space: LossSpace,
        net: Option<SirenNetwork>,
    ) -> Result<Self> {
        schedule.validate()?;
        let xi = CoefficientMatrix::for_dictionary(&problem.spec);
        let net_state = net.as_ref().map_or_else(Vec::new, |n| {
            n.layers
                .iter()
                .map(|l| (AdamState::new(l.weights.len()), AdamState::new(l.bias.len())))
                .collect()
        });
        Ok(Self {
            xi_state: AdamState::new(xi.values().len()),
            lr_net: schedule.lr_net,
            lr_xi: schedule.lr_xi,
            problem,
            weights,
            schedule,
            space,
            net,
            xi,
            net_state,
            iteration: 0,
            trace: TrainingTrace::default(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.schedule.max_iter
    }

    pub fn coefficients(&self) -> &CoefficientMatrix {
        &self.xi
    }

    pub fn network(&self) -> Option<&SirenNetwork> {
        self.net.as_ref()
    }

    pub fn trace(&self) -> &TrainingTrace {
        &self.trace
    }

    pub fn schedule(&self) -> &TrainSchedule {
        &self.schedule
    }

    pub fn learning_rates(&self) -> (f64, f64) {
        (self.lr_net, self.lr_xi)
    }

    /// Replaces the network parameters (same architecture).
    pub fn set_network(&mut self, net: SirenNetwork) -> Result<()> {
        match &self.net {
            Some(old) if old.dims() == net.dims() => {
                self.net = Some(net);
                Ok(())
            }
            _ => Err(Error::invalid("network architecture does not match")),
        }
    }

    /// Replaces the coefficient matrix, e.g. to start from a known guess.
    pub fn set_coefficients(&mut self, xi: CoefficientMatrix) -> Result<()> {
        if xi.labels() != self.xi.labels() || xi.state_names() != self.xi.state_names() {
            return Err(Error::invalid("coefficient labels do not match the dictionary"));
        }
        self.xi = xi;
        Ok(())
    }

    /// Total loss and gradients at an arbitrary parameter point.
    pub fn evaluate(&self, net: Option<&SirenNetwork>, xi: &Tensor) -> Result<Evaluation> {
        let mut tape = Tape::new();
        let rec = record_losses(&mut tape, &self.problem, &self.weights, net, xi)?;
        tape.forward(&[])?;
        let value = |id: Option<NodeId>| id.map_or(0.0, |id| tape.value(id).expect("evaluated").item());
        let loss = LossParts {
            total: value(Some(rec.total)),
            mse: value(rec.mse),
            deri: value(rec.deri),
            rk4: value(rec.rk4),
        };
        if !loss.total.is_finite() {
            return Ok(Evaluation {
                loss,
                net_grads: Vec::new(),
                xi_grad: Tensor::zeros(xi.rows(), xi.cols()),
            });
        }
        let grads = tape.backward(rec.total, &Tensor::scalar(1.0))?;
        let net_grads = match &rec.params {
            Some(p) => p
                .weights
                .iter()
                .zip(&p.biases)
                .map(|(&w, &b)| (grads.get_or_zeros(w, tape.shape(w)), grads.get_or_zeros(b, tape.shape(b))))
                .collect(),
            None => Vec::new(),
        };
        Ok(Evaluation {
            loss,
            net_grads,
            xi_grad: grads.get_or_zeros(rec.xi, tape.shape(rec.xi)),
        })
    }

    /// Loss at the current parameters.
    pub fn loss(&self) -> Result<LossParts> {
        Ok(self.evaluate(self.net.as_ref(), self.xi.values())?.loss)
    }

    /// One optimizer update, followed by thresholding when the schedule
    /// calls for it. Returns the loss before the update.
    pub fn step(&mut self) -> Result<LossParts> {
        if self.is_finished() {
            return Err(Error::invalid("training already finished"));
        }
        let eval = self.evaluate(self.net.as_ref(), self.xi.values())?;
        let k = self.iteration + 1;
        if !eval.loss.total.is_finite() {
            self.log(k, eval.loss);
            return Err(Error::Diverged {
                iteration: k,
                partial: Box::new(PartialRun {
                    trace: self.trace.clone(),
                    coefficients: self.xi.clone(),
                }),
            });
        }
        if let Some(net) = &mut self.net {
            let cfg = self.schedule.adam(self.lr_net);
            for ((layer, (gw, gb)), (sw, sb)) in net.layers.iter_mut().zip(&eval.net_grads).zip(&mut self.net_state) {
                adam_step(layer.weights.values_mut(), gw.values(), sw, &cfg);
                adam_step(layer.bias.values_mut(), gb.values(), sb, &cfg);
            }
        }
        masked_adam_step(&mut self.xi, eval.xi_grad.values(), &mut self.xi_state, &self.schedule.adam(self.lr_xi));
        self.iteration = k;
        let thresholds = self.schedule.thresholds_at(k);
        if thresholds || k == 1 || k % self.schedule.log_every == 0 || k == self.schedule.max_iter {
            self.log(k, eval.loss);
        }
        if thresholds {
            self.threshold_now();
        }
        Ok(eval.loss)
    }

    fn log(&mut self, iter: usize, loss: LossParts) {
        self.trace.records.push(TraceRecord {
            iter,
            loss,
            active_terms: self.xi.active_count(),
        });
    }

    /// Thresholds `Ξ` and restarts both optimizers at the reset rates.
    fn threshold_now(&mut self) {
        let pruned = self.xi.threshold(self.schedule.tol);
        let names: Vec<(String, String)> = pruned
            .into_iter()
            .map(|(f, s)| (self.xi.labels()[f].clone(), self.xi.state_names()[s].clone()))
            .collect();
        self.trace.events.push(ThresholdEvent {
            iteration: self.iteration,
            pruned: names,
        });
        self.lr_net = self.schedule.reset_lr_net;
        self.lr_xi = self.schedule.reset_lr_xi;
        for (w, b) in &mut self.net_state {
            *w = AdamState::new(w.m.len());
            *b = AdamState::new(b.m.len());
        }
        self.xi_state = AdamState::new(self.xi_state.m.len());
    }

    /// Runs the remaining iterations.
    pub fn run(mut self) -> Result<TrainOutcome> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.into_outcome())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            coefficients: self.xi,
            network: self.net,
            trace: self.trace,
            space: self.space,
        }
    }
}

/// Trains network and coefficients jointly on `dataset`.
pub fn train_ineural(dataset: &Dataset, spec: &DictionarySpec, config: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(dataset, spec, config)?.run()
}

/// One-step regression of `Ξ` on the raw samples, thresholded on the same
/// schedule as [`train_ineural`].
pub fn rk4_sindy_direct(dataset: &Dataset, spec: &DictionarySpec, schedule: &TrainSchedule) -> Result<TrainOutcome> {
    Trainer::direct(dataset, spec, schedule, LossSpace::Physical)?.run()
}
