//! Coefficient error, simulation of discovered models, equation printing and
//! the per-run result record.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dictionary::DictionarySpec;
use crate::dynamics::{rk4_step, Dataset};
use crate::error::{Error, Result};
use crate::network::SirenNetwork;
use crate::regression::{stls_sindy, CoefficientMatrix};
use crate::training::{LossSpace, LossWeights, Method, TrainConfig, Trainer, TrainingTrace};

/// Per-state l1 distance between two coefficient matrices over the same labels.
pub fn coeff_error(truth: &CoefficientMatrix, estimate: &CoefficientMatrix) -> Result<Vec<f64>> {
    if truth.labels() != estimate.labels() || truth.state_names() != estimate.state_names() {
        return Err(Error::invalid("coefficient matrices use different labels"));
    }
    Ok((0..truth.states())
        .map(|j| {
            (0..truth.features())
                .map(|f| (truth.get(f, j) - estimate.get(f, j)).abs())
                .sum()
        })
        .collect())
}

/// States beyond this magnitude end a simulation.
pub const BLOW_UP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// One row per reached time point.
    pub states: Vec<Vec<f64>>,
    pub diverged: bool,
}

/// Integrates `ẋ = Θ(x) Ξ` with fixed-step RK4 over `times`.
pub fn simulate_discovered(xi: &Tensor, spec: &DictionarySpec, x0: &[f64], times: &[f64]) -> Result<Simulation> {
    if !xi.is_finite() {
        return Err(Error::invalid("coefficients must be finite"));
    }
    if x0.len() != spec.state_dim {
        return Err(Error::invalid("initial condition does not match the dictionary"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("times must be strictly increasing"));
    }
    let mut field = |x: &[f64]| spec.apply(x, xi).expect("shapes checked");
    // check the shape once up front
    spec.apply(x0, xi)?;
    let mut states = vec![x0.to_vec()];
    for w in times.windows(2) {
        let next = rk4_step(&mut field, states.last().expect("nonempty"), w[1] - w[0]);
        if next.iter().any(|v| !(v.abs() <= BLOW_UP)) {
            return Ok(Simulation { states, diverged: true });
        }
        states.push(next);
    }
    Ok(Simulation { states, diverged: false })
}

fn format_number(v: f64, precision: usize) -> String {
    let s = format!("{v:.precision$}");
    // avoid printing "-0.000"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// One `dxi/dt = ...` line per state, active nonzero terms in feature order.
pub fn format_equations(xi: &CoefficientMatrix, precision: usize) -> Vec<String> {
    (0..xi.states())
        .map(|j| {
            let mut line = format!("d{}/dt =", xi.state_names()[j]);
            let mut first = true;
            for f in 0..xi.features() {
                let v = xi.get(f, j);
                if !xi.is_active(f, j) || v == 0.0 {
                    continue;
                }
                let mag = format_number(v.abs(), precision);
                let term = if xi.labels()[f] == "1" {
                    mag
                } else {
                    format!("{mag}*{}", xi.labels()[f])
                };
                let negative = v < 0.0 && format_number(v, precision).starts_with('-');
                match (first, negative) {
                    (true, true) => line.push_str(&format!(" -{term}")),
                    (true, false) => line.push_str(&format!(" {term}")),
                    (false, true) => line.push_str(&format!(" - {term}")),
                    (false, false) => line.push_str(&format!(" + {term}")),
                }
                first = false;
            }
            if first {
                line.push_str(" 0");
            }
            line
        })
        .collect()
}

/// Everything a single discovery run produced.
#[derive(Debug, Clone)]
pub struct DiscoveryResult {
    pub method: Method,
    pub system: String,
    pub sigma: f64,
    pub alpha: f64,
    pub seed: u64,
    pub coefficients: CoefficientMatrix,
    pub equations: Vec<String>,
    /// Per-state error, present only when a ground truth was supplied and
    /// the coefficients are in physical units.
    pub errors: Option<Vec<f64>>,
    pub trace: Option<TrainingTrace>,
    pub network: Option<SirenNetwork>,
    pub space: LossSpace,
    /// Least squares fell back to the pseudo-inverse.
    pub ill_conditioned: bool,
    pub runtime_s: f64,
}

impl DiscoveryResult {
    pub fn error_total(&self) -> Option<f64> {
        self.errors.as_ref().map(|e| e.iter().sum())
    }

    pub fn to_json(&self, coeff_csv_path: &str) -> ResultJson {
        ResultJson {
            method: self.method.name().to_string(),
            system: self.system.clone(),
            sigma: self.sigma,
            alpha: self.alpha,
            seed: self.seed,
            equations: self.equations.clone(),
            coeff_csv_path: coeff_csv_path.to_string(),
            errors: self.errors.clone(),
            runtime_s: self.runtime_s,
            loss_space: self.space,
            ill_conditioned: self.ill_conditioned,
        }
    }
}

/// Serialized form of a [`DiscoveryResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub method: String,
    pub system: String,
    pub sigma: f64,
    pub alpha: f64,
    pub seed: u64,
    pub equations: Vec<String>,
    pub coeff_csv_path: String,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<f64>>,
    pub runtime_s: f64,
    #[serde(default)]
    pub loss_space: LossSpace,
    #[serde(default)]
    pub ill_conditioned: bool,
}

/// Settings for [`discover`] beyond the training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoverOptions {
    pub train: TrainConfig,
    pub stls_max_iter: usize,
    pub precision: usize,
}

impl Default for DiscoverOptions {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            stls_max_iter: 10,
            precision: 3,
        }
    }
}

/// Runs one method on `dataset`. `truth` (physical units) enables the error
/// metric.
pub fn discover(
    dataset: &Dataset,
    spec: &DictionarySpec,
    method: Method,
    truth: Option<&CoefficientMatrix>,
    opts: &DiscoverOptions,
) -> Result<DiscoveryResult> {
    let start = Instant::now();
    let (coefficients, trace, network, space, ill) = match method {
        Method::Stls => {
            let r = stls_sindy(dataset, spec, opts.train.schedule.tol.max(f64::MIN_POSITIVE), opts.stls_max_iter)?;
            (r.coefficients, None, None, LossSpace::Physical, r.ill_conditioned)
        }
        Method::Rk4Direct => {
            let out = Trainer::direct(dataset, spec, &opts.train.schedule, opts.train.space)?.run()?;
            (out.coefficients, Some(out.trace), None, out.space, false)
        }
        _ => {
            let config = TrainConfig {
                weights: match method {
                    Method::Ineural => opts.train.weights,
                    _ => LossWeights::for_method(method),
                },
                ..opts.train.clone()
            };
            let out = Trainer::new(dataset, spec, &config)?.run()?;
            (out.coefficients, Some(out.trace), out.network, out.space, false)
        }
    };
    let errors = match (truth, space) {
        (Some(t), LossSpace::Physical) => Some(coeff_error(t, &coefficients)?),
        _ => None,
    };
    Ok(DiscoveryResult {
        method,
        system: dataset.system.clone(),
        sigma: dataset.sigma,
        alpha: dataset.alpha,
        seed: opts.train.seed,
        equations: format_equations(&coefficients, opts.precision),
        coefficients,
        errors,
        trace,
        network,
        space,
        ill_conditioned: ill,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}
