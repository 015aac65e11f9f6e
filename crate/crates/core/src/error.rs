use thiserror::Error;

/// Errors produced by kernels, objectives, solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A point lies outside the (interior of the) domain of the kernel or objective.
    #[error("domain violation: {0}")]
    Domain(String),

    /// A computation produced a non-finite value or left the admissible region.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Inconsistent dimensions between operands.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Invalid solver, line-search or experiment configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
