use thiserror::Error;

/// Errors produced by the library. Each variant maps to one failure class
/// callers are expected to branch on (CLI exit codes, HTTP status, FFI codes).
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid mesh: {0}")]
    Validity(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! param_err {
    ($($arg:tt)*) => { $crate::error::Error::Parameter(format!($($arg)*)) };
}
pub(crate) use param_err;
