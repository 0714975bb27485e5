use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Malformed input data, with a 1-based line number when known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input data violates a precondition (ordering, coverage, emptiness).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration or model specification.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical routine failed to converge or produced invalid output.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    pub fn data(msg: impl Into<String>) -> Self {
        CoreError::Data(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        CoreError::Numerical(msg.into())
    }
}
