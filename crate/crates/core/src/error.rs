use thiserror::Error;

use crate::regression::CoefficientMatrix;
use crate::training::TrainingTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// State recovered from a run that stopped on a non-finite loss.
#[derive(Debug, Clone)]
pub struct PartialRun {
    pub trace: TrainingTrace,
    /// Last coefficients for which the loss was still finite.
    pub coefficients: CoefficientMatrix,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    Shape {
        node: usize,
        op: &'static str,
        detail: String,
    },
    #[error("backward requested before forward evaluation")]
    NotEvaluated,
    #[error("leaf node {0} has no bound value")]
    Unbound(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("loss became non-finite at iteration {iteration}")]
    Diverged {
        iteration: usize,
        partial: Box<PartialRun>,
    },
    #[error("cannot parse feature label {0:?}")]
    Label(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Diverged { .. })
    }
}
