//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by design construction, covariance validation, sampling,
/// splitting and evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("singular design: reciprocal condition number {rcond:e} below {threshold:e}")]
    SingularDesign { rcond: f64, threshold: f64 },
    #[error("invalid covariance specification: {0}")]
    InvalidSpec(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
