//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched or invalid shapes (matrix dims, vector lengths).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid scalar parameter (negative variance, gamma <= 0, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Config file missing, unparseable, or failing validation.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Corrupt or incompatible binary container (bad magic, version, header).
    #[error("format error: {0}")]
    Format(String),

    /// Numerical failure (non-finite values, unsolvable system).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 io/format, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::Dimension(_) => 2,
            Error::Io(_) | Error::Format(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}
