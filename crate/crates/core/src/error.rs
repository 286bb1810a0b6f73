use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GkfError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("ill-conditioned polynomial fit (condition number {cond:.3e} exceeds {limit:.1e})")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("tube radius {rho} is not below the declared reach {reach}")]
    OutsideReach { rho: f64, reach: f64 },

    #[error("resolution guard: {0}")]
    Resolution(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GkfError>;

pub(crate) fn invalid(msg: impl Into<String>) -> GkfError {
    GkfError::InvalidArgument(msg.into())
}
