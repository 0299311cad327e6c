//! Browser bindings: simulate a benchmark, run thresholded least squares on
//! it, or train the network-based estimator a few steps at a time.
//!
//! Every call returns a JSON string so the page needs no generated types.

use ineural_sindy::regression::stls_sindy;
use ineural_sindy::{coeff_error, format_equations, generate_dataset, Benchmark, Dataset, Preset, Trainer};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn setup(system: &str, sigma: f64, samples: usize, seed: u64) -> Result<(Preset, Dataset), String> {
    let b = Benchmark::from_name(system).ok_or_else(|| format!("unknown system {system:?}"))?;
    let preset = Preset::for_benchmark(b);
    let mut opts = preset.generate_options(sigma, seed);
    opts.samples = samples;
    let data = generate_dataset(&b.system(), &preset.initial_conditions, &opts).map_err(|e| e.to_string())?;
    Ok((preset, data))
}

#[derive(Serialize)]
struct TrajectoryJson {
    t: Vec<f64>,
    /// One series per state variable.
    clean: Vec<Vec<f64>>,
    noisy: Vec<Vec<f64>>,
}

fn columns(m: &ineural_sindy::autodiff::Tensor) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|c| (0..m.rows()).map(|r| m.get(r, c)).collect()).collect()
}

/// Noisy and clean trajectories of a benchmark from its standard initial
/// conditions.
#[wasm_bindgen]
pub fn simulate(system: &str, sigma: f64, samples: usize, seed: u64) -> Result<String, String> {
    let (_, data) = setup(system, sigma, samples, seed)?;
    let out: Vec<TrajectoryJson> = data
        .trajectories
        .iter()
        .map(|t| TrajectoryJson {
            t: t.times.clone(),
            clean: columns(&t.clean),
            noisy: columns(&t.noisy),
        })
        .collect();
    Ok(serde_json::to_string(&out).expect("serializable"))
}

#[derive(Serialize)]
struct DiscoveryJson {
    equations: Vec<String>,
    errors: Vec<f64>,
    active_terms: usize,
}

/// Sequentially thresholded least squares on finite-difference derivatives.
#[wasm_bindgen]
pub fn stls(system: &str, sigma: f64, samples: usize, seed: u64, tol: f64) -> Result<String, String> {
    let (preset, data) = setup(system, sigma, samples, seed)?;
    let spec = preset.dictionary();
    let r = stls_sindy(&data, &spec, tol, 10).map_err(|e| e.to_string())?;
    let truth = preset.ground_truth().map_err(|e| e.to_string())?;
    let out = DiscoveryJson {
        equations: format_equations(&r.coefficients, 3),
        errors: coeff_error(&truth, &r.coefficients).map_err(|e| e.to_string())?,
        active_terms: r.coefficients.active_count(),
    };
    Ok(serde_json::to_string(&out).expect("serializable"))
}

/// A training run that the page advances in small chunks so the UI stays
/// responsive.
#[wasm_bindgen]
pub struct Session {
    trainer: Trainer,
    truth: ineural_sindy::CoefficientMatrix,
}

#[derive(Serialize)]
struct ProgressJson {
    iteration: usize,
    max_iter: usize,
    finished: bool,
    loss: f64,
    loss_mse: f64,
    loss_deri: f64,
    loss_rk4: f64,
    equations: Vec<String>,
    errors: Vec<f64>,
    active_terms: usize,
}

#[wasm_bindgen]
impl Session {
    /// Starts a run with the system's standard settings, shortened to
    /// `max_iter` updates.
    #[wasm_bindgen(constructor)]
    pub fn new(system: &str, sigma: f64, samples: usize, seed: u64, max_iter: usize) -> Result<Session, String> {
        let (preset, data) = setup(system, sigma, samples, seed)?;
        let mut config = preset.train_config(seed);
        config.schedule = config.schedule.shortened(max_iter);
        let trainer = Trainer::new(&data, &preset.dictionary(), &config).map_err(|e| e.to_string())?;
        let truth = preset.ground_truth().map_err(|e| e.to_string())?;
        Ok(Session { trainer, truth })
    }

    /// Runs up to `steps` more updates and reports progress.
    pub fn advance(&mut self, steps: usize) -> Result<String, String> {
        let mut last = None;
        for _ in 0..steps {
            if self.trainer.is_finished() {
                break;
            }
            last = Some(self.trainer.step().map_err(|e| e.to_string())?);
        }
        let loss = match last {
            Some(l) => l,
            None => self.trainer.loss().map_err(|e| e.to_string())?,
        };
        let xi = self.trainer.coefficients();
        let out = ProgressJson {
            iteration: self.trainer.iteration(),
            max_iter: self.trainer.schedule().max_iter,
            finished: self.trainer.is_finished(),
            loss: loss.total,
            loss_mse: loss.mse,
            loss_deri: loss.deri,
            loss_rk4: loss.rk4,
            equations: format_equations(xi, 3),
            errors: coeff_error(&self.truth, xi).map_err(|e| e.to_string())?,
            active_terms: xi.active_count(),
        };
        Ok(serde_json::to_string(&out).expect("serializable"))
    }
}
