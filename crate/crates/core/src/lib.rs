//! Sparse discovery of ordinary differential equations from noisy samples.
//!
//! A sine-activated network fits the measured trajectories as a smooth
//! function of time; its outputs and exact time derivatives feed a candidate
//! library whose sparse coefficient matrix is trained jointly with the
//! network under a data, derivative and Runge–Kutta one-step loss.

pub mod autodiff;
pub mod dictionary;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod network;
pub mod presets;
pub mod regression;
pub mod rng;
pub mod training;

pub use dictionary::DictionarySpec;
pub use dynamics::{generate_dataset, Benchmark, Dataset, GenerateOptions, OdeSystem};
pub use error::{Error, Result};
pub use metrics::{coeff_error, discover, format_equations, DiscoverOptions, DiscoveryResult};
pub use network::{NormalizationRecord, SirenNetwork};
pub use presets::Preset;
pub use regression::{stls, stls_sindy, CoefficientMatrix};
pub use training::{train_ineural, LossSpace, LossWeights, Method, TrainConfig, TrainSchedule, Trainer};
