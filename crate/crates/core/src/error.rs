use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A coefficient or declared bound was violated at runtime.
    #[error("validation error: {0}")]
    Validation(String),

    /// Solver or experiment configuration is not usable (CFL, step guards, schema).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data cannot support the requested computation (non-finite, degenerate, nonpositive).
    #[error("data error: {0}")]
    Data(String),

    #[error("action {action} outside action space [{lower}, {upper}] (strict mode)")]
    ActionOutOfRange { action: f64, lower: f64, upper: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
