use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the detector, its training loop and the evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training diverged at step {step}: loss is not finite")]
    TrainingDiverged { step: usize },

    #[error("density matrix is not positive semidefinite: measurement {value:e} below tolerance")]
    PsdViolation { value: f64 },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
