use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad magic, unsupported version or dtype, malformed header.
    #[error("format error: {0}")]
    Format(String),

    /// Header and payload disagree (truncated or trailing data).
    #[error("corrupt container: {0}")]
    Corrupt(String),

    /// Non-finite values or otherwise invalid numeric content.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape error: expected {expected} values, got {actual}")]
    Shape { expected: usize, actual: usize },

    /// Invalid configuration or generator parameters.
    #[error("invalid parameter: {0}")]
    Config(String),

    /// An operation was asked to reduce over an empty set.
    #[error("empty domain: {0}")]
    EmptyDomain(String),

    /// Reference implementations refuse inputs beyond their size guard.
    #[error("size guard exceeded: {0}")]
    Guard(String),

    #[error("resource error: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Process exit status classes shared by the CLI and the C interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i32)]
pub enum ErrorClass {
    Usage = 2,
    Format = 3,
    Validation = 4,
    Io = 5,
    Internal = 6,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Format(_) | Error::Corrupt(_) => ErrorClass::Format,
            Error::Validation(_) | Error::Shape { .. } | Error::EmptyDomain(_) => {
                ErrorClass::Validation
            }
            Error::Io(_) => ErrorClass::Io,
            Error::Guard(_) | Error::Resource(_) => ErrorClass::Internal,
        }
    }
}
