use thiserror::Error;

/// Errors raised by the physics, estimation and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data does not satisfy the preconditions of an operation
    /// (grid too narrow, too few points, mismatched grids, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Inputs are individually valid but mutually inconsistent.
    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    /// An iterative solver failed to produce a usable answer.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
