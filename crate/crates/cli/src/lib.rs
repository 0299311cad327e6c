//! Experiment driver: data generation, discovery runs, sweeps and reports.

pub mod commands;
pub mod config;
pub mod svg;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit status: 2 for bad configuration, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Input(_) | CliError::Io(_) => 1,
        }
    }

    pub fn from_core(e: ineural_sindy::Error) -> Self {
        match e {
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            ineural_sindy::Error::Io(e) => CliError::Io(e.to_string()),
            e @ ineural_sindy::Error::Json(_) => CliError::Input(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}
