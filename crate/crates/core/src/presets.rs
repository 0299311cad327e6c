//! Standard experiment settings for the four benchmark systems.

use crate::dictionary::DictionarySpec;
use crate::dynamics::{Benchmark, GenerateOptions};
use crate::error::Result;
use crate::regression::CoefficientMatrix;
use crate::rng::SplitMix64;
use crate::training::{NetworkConfig, TrainConfig, TrainSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub benchmark: Benchmark,
    pub initial_conditions: Vec<Vec<f64>>,
    pub t_span: (f64, f64),
    pub samples: usize,
    pub alpha: f64,
    pub degree: u32,
    pub hidden: Vec<usize>,
    pub schedule: TrainSchedule,
}

impl Preset {
    pub fn for_benchmark(b: Benchmark) -> Self {
        let (initial_conditions, t_span, samples, alpha, degree, width) = match b {
            Benchmark::LinearOscillator => (
                vec![vec![2.0, 0.0], vec![-1.0, 1.5], vec![0.5, -2.0]],
                (0.0, 10.0),
                400,
                1.0,
                2,
                32,
            ),
            Benchmark::CubicOscillator => (vec![vec![2.0, 2.0], vec![-2.0, -2.0]], (0.0, 10.0), 800, 1.0, 3, 32),
            Benchmark::FitzHughNagumo => (vec![vec![2.0, 1.5], vec![1.5, 2.0]], (0.0, 200.0), 400, 1.0, 3, 32),
            Benchmark::Lorenz => (
                vec![vec![-8.0, 7.0, 27.0], vec![-6.0, 6.0, 25.0], vec![-9.0, 8.0, 22.0]],
                (0.0, 10.0),
                200,
                0.1,
                2,
                64,
            ),
        };
        Self {
            benchmark: b,
            initial_conditions,
            t_span,
            samples,
            alpha,
            degree,
            hidden: vec![width; 3],
            schedule: TrainSchedule::for_benchmark(b),
        }
    }

    /// Single initial condition used by the noise/sample and noise/width
    /// sweeps. The cubic oscillator draws both components uniformly from
    /// `[1, 4]` with `seed`.
    pub fn sweep_initial_condition(b: Benchmark, seed: u64) -> Vec<f64> {
        match b {
            Benchmark::LinearOscillator => vec![5.0, 2.0],
            Benchmark::CubicOscillator => {
                let mut rng = SplitMix64::substream(seed, u64::MAX);
                vec![rng.uniform(1.0, 4.0), rng.uniform(1.0, 4.0)]
            }
            Benchmark::FitzHughNagumo => vec![3.0, 2.0],
            Benchmark::Lorenz => vec![-8.0, 7.0, 27.0],
        }
    }

    pub fn dictionary(&self) -> DictionarySpec {
        DictionarySpec::polynomial(self.benchmark.system().state_dim, self.degree)
    }

    /// True coefficients over [`Preset::dictionary`] in the preset's scaled units.
    pub fn ground_truth(&self) -> Result<CoefficientMatrix> {
        let spec = self.dictionary();
        let xi = self.benchmark.system().ground_truth(&spec, self.alpha)?;
        CoefficientMatrix::from_values(spec.labels(), spec.state_names(), xi)
    }

    pub fn generate_options(&self, sigma: f64, seed: u64) -> GenerateOptions {
        GenerateOptions {
            t_span: self.t_span,
            samples: self.samples,
            sigma,
            alpha: self.alpha,
            seed,
            refine: 10,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            schedule: self.schedule.clone(),
            network: NetworkConfig {
                hidden: self.hidden.clone(),
                ..Default::default()
            },
            seed,
            ..Default::default()
        }
    }
}
