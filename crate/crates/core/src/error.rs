use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error for `{key}` (flag `--{}`): {message}", key.replace('_', "-"))]
    Config { key: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver failed to reach tolerance: {0}")]
    NumericalFailure(String),

    #[error("no feasible candidate among {trials} randomization trials")]
    RandomizationFailure { trials: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
