use alloc::string::String;

use crate::models::VarianceComponents;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The data cannot identify the requested model.
    #[error("estimation error: {0}")]
    Estimation(String),
    /// A covariance or information matrix is not positive definite.
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error(
        "optimizer did not converge after {iterations} iterations \
         (last iterate: {last:?}, log-likelihood {log_likelihood})"
    )]
    NonConvergence {
        last: VarianceComponents,
        log_likelihood: f64,
        iterations: usize,
    },
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
