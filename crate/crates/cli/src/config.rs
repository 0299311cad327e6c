//! Experiment configuration files.
//!
//! A config is a TOML document with the sections below; every key is
//! optional except `experiment.system`, and missing keys fall back to the
//! standard settings of that system. Unknown keys are rejected.
//!
//! ```toml
//! [experiment]
//! system = "linear_oscillator"   # linear_oscillator | cubic_oscillator | fitzhugh_nagumo | lorenz
//! seed = 0
//! out_dir = "out/linear"
//! methods = ["ineural", "stls"]  # ineural | deri_only | rk4_only | rk4_direct | stls
//!
//! [data]
//! initial_conditions = [[2.0, 0.0], [-1.0, 1.5]]
//! t_span = [0.0, 10.0]
//! samples = 400
//! sigma = [0.0, 0.02]
//! alpha = 1.0
//! refine = 10
//! csv = "data.csv"               # load samples instead of generating them
//!
//! [dictionary]
//! degree = 2
//! include_constant = true
//! trig_harmonics = []
//!
//! [network]
//! hidden = [32, 32, 32]
//! omega_first = 30.0
//! omega_hidden = 30.0
//!
//! [training]
//! max_iter = 15000
//! init_iter = 5000
//! q = 2000
//! tol = 0.05
//! lr_net = 1e-4
//! lr_xi = 1e-3
//! reset_lr_net = 5e-6
//! reset_lr_xi = 1e-2
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//! log_every = 100
//! mu1 = 1.0
//! mu2 = 0.1
//! mu3 = 0.1
//! loss_space = "physical"        # physical | normalized
//! stls_max_iter = 10
//!
//! [sweep]
//! mode = "scene_a"               # scene_a (noise x samples) | scene_b (noise x width)
//! sigma = [0.0, 0.02, 0.04, 0.06]
//! samples = [30, 40, 50, 100, 200, 300, 400]
//! neurons = [2, 4, 8, 16, 32, 64]
//! initial_condition = [5.0, 2.0]
//! ```

use std::path::{Path, PathBuf};

use ineural_sindy::dynamics::GenerateOptions;
use ineural_sindy::training::{NetworkConfig, TrainConfig};
use ineural_sindy::{Benchmark, DictionarySpec, LossSpace, LossWeights, Method, Preset};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub data: DataSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub dictionary: DictionarySection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub network: NetworkSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub training: TrainingSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub sweep: SweepSection,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub system: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_conditions: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_span: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub include_constant: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trig_harmonics: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_first: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_hidden: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_net: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reset_lr_net: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reset_lr_xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_space: Option<LossSpace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stls_max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Noise level against sample count.
    SceneA,
    /// Noise level against hidden-layer width.
    SceneB,
}

impl SweepMode {
    pub fn name(self) -> &'static str {
        match self {
            SweepMode::SceneA => "scene_a",
            SweepMode::SceneB => "scene_b",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<SweepMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neurons: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_condition: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// A config naming only the system.
    pub fn for_system(b: Benchmark) -> Self {
        Self {
            experiment: ExperimentSection {
                system: b.name().to_string(),
                seed: None,
                out_dir: None,
                methods: None,
            },
            data: DataSection::default(),
            dictionary: DictionarySection::default(),
            network: NetworkSection::default(),
            training: TrainingSection::default(),
            sweep: SweepSection::default(),
        }
    }

    /// Fills defaults and checks every value.
    pub fn resolve(&self) -> Result<Experiment, CliError> {
        let bad = |msg: String| CliError::Config(msg);
        let system = Benchmark::from_name(&self.experiment.system)
            .ok_or_else(|| bad(format!("unknown system {:?}", self.experiment.system)))?;
        let preset = Preset::for_benchmark(system);
        let n = system.system().state_dim;
        let seed = self.experiment.seed.unwrap_or(0);
        let methods = match &self.experiment.methods {
            Some(names) => parse_methods(names)?,
            None => vec![Method::Ineural],
        };

        let d = &self.data;
        let initial_conditions = d.initial_conditions.clone().unwrap_or(preset.initial_conditions.clone());
        if initial_conditions.is_empty() || initial_conditions.iter().any(|ic| ic.len() != n) {
            return Err(bad(format!("initial conditions must be nonempty vectors of length {n}")));
        }
        let [t0, t1] = d.t_span.unwrap_or([preset.t_span.0, preset.t_span.1]);
        if !(t1 > t0) {
            return Err(bad(format!("t_span [{t0}, {t1}] is empty")));
        }
        let samples = d.samples.unwrap_or(preset.samples);
        if samples < 2 {
            return Err(bad(format!("samples = {samples}; need at least 2")));
        }
        let sigmas = d.sigma.clone().unwrap_or_else(|| vec![0.0]);
        if sigmas.is_empty() || sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(bad("sigma must be a nonempty list of non-negative values".into()));
        }
        let alpha = d.alpha.unwrap_or(preset.alpha);
        if !(alpha > 0.0) {
            return Err(bad(format!("alpha = {alpha} must be positive")));
        }
        let refine = d.refine.unwrap_or(10);
        if refine == 0 {
            return Err(bad("refine must be positive".into()));
        }

        let dict = DictionarySpec {
            state_dim: n,
            max_degree: self.dictionary.degree.unwrap_or(preset.degree),
            include_constant: self.dictionary.include_constant.unwrap_or(true),
            trig_harmonics: self.dictionary.trig_harmonics.clone().unwrap_or_default(),
        };
        dict.validate().map_err(|e| bad(e.to_string()))?;

        let defaults = NetworkConfig::default();
        let network = NetworkConfig {
            hidden: self.network.hidden.clone().unwrap_or(preset.hidden.clone()),
            omega_first: self.network.omega_first.unwrap_or(defaults.omega_first),
            omega_hidden: self.network.omega_hidden.unwrap_or(defaults.omega_hidden),
        };
        if network.hidden.is_empty() || network.hidden.contains(&0) {
            return Err(bad("hidden layer widths must be positive".into()));
        }
        if !(network.omega_first > 0.0 && network.omega_hidden > 0.0) {
            return Err(bad("omega values must be positive".into()));
        }

        let t = &self.training;
        let mut schedule = preset.schedule.clone();
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = t.$field { schedule.$field = v; } )* };
        }
        take!(max_iter, init_iter, q, tol, lr_net, lr_xi, reset_lr_net, reset_lr_xi, beta1, beta2, eps, log_every);
        schedule.validate().map_err(|e| bad(e.to_string()))?;
        let dw = LossWeights::default();
        let weights = LossWeights {
            mse: t.mu1.unwrap_or(dw.mse),
            deri: t.mu2.unwrap_or(dw.deri),
            rk4: t.mu3.unwrap_or(dw.rk4),
        };
        weights.validate().map_err(|e| bad(e.to_string()))?;
        let stls_max_iter = t.stls_max_iter.unwrap_or(10);

        let s = &self.sweep;
        let sweep = SweepSettings {
            mode: s.mode.unwrap_or(SweepMode::SceneA),
            sigmas: s.sigma.clone().unwrap_or_else(|| vec![0.0, 0.02, 0.04, 0.06]),
            samples: s.samples.clone().unwrap_or_else(|| vec![30, 40, 50, 100, 200, 300, 400]),
            neurons: s.neurons.clone().unwrap_or_else(|| vec![2, 4, 8, 16, 32, 64]),
            initial_condition: s
                .initial_condition
                .clone()
                .unwrap_or_else(|| Preset::sweep_initial_condition(system, seed)),
        };
        if sweep.initial_condition.len() != n {
            return Err(bad(format!("sweep initial condition must have {n} entries")));
        }
        if sweep.samples.iter().any(|&m| m < 3) || sweep.neurons.contains(&0) {
            return Err(bad("sweep samples must be >= 3 and neurons positive".into()));
        }
        if sweep.sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(bad("sweep sigma values must be non-negative".into()));
        }

        Ok(Experiment {
            system,
            seed,
            out_dir: self.experiment.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
            methods,
            initial_conditions,
            t_span: (t0, t1),
            samples,
            sigmas,
            alpha,
            refine,
            csv: d.csv.clone(),
            dictionary: dict,
            train: TrainConfig {
                weights,
                schedule,
                network,
                space: t.loss_space.unwrap_or_default(),
                seed,
            },
            stls_max_iter,
            sweep,
        })
    }
}

pub fn parse_methods<S: AsRef<str>>(names: &[S]) -> Result<Vec<Method>, CliError> {
    let mut out = Vec::new();
    for name in names {
        let name = name.as_ref().trim();
        let m = Method::from_name(name).ok_or_else(|| CliError::Config(format!("unknown method {name:?}")))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no methods selected".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub mode: SweepMode,
    pub sigmas: Vec<f64>,
    pub samples: Vec<usize>,
    pub neurons: Vec<usize>,
    pub initial_condition: Vec<f64>,
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub system: Benchmark,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub methods: Vec<Method>,
    pub initial_conditions: Vec<Vec<f64>>,
    pub t_span: (f64, f64),
    pub samples: usize,
    pub sigmas: Vec<f64>,
    pub alpha: f64,
    pub refine: usize,
    pub csv: Option<PathBuf>,
    pub dictionary: DictionarySpec,
    pub train: TrainConfig,
    pub stls_max_iter: usize,
    pub sweep: SweepSettings,
}

impl Experiment {
    pub fn generate_options(&self, sigma: f64) -> GenerateOptions {
        GenerateOptions {
            t_span: self.t_span,
            samples: self.samples,
            sigma,
            alpha: self.alpha,
            seed: self.seed,
            refine: self.refine,
        }
    }
}
