use thiserror::Error;

use nalgebra::DVector;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    /// The inner solver ran out of iterations before certifying its output.
    /// Carries the best primal iterate seen.
    #[error("inner solver failed after {iters} iterations: {reason}")]
    InnerFailure {
        reason: String,
        iters: usize,
        best: Option<DVector<f64>>,
    },

    #[error("outer iteration failed: {0}")]
    OuterFailure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, SolverError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SolverError::InvalidArgument(msg.into()))
}
