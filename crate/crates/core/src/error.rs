use thiserror::Error;

/// Errors raised by the library outside the network harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A structural precondition on the input was violated (ordering, lengths).
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Malformed time-tag file or other binary input.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
