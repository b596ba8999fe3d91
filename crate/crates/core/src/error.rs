use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("iterate became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("training failed: {divergent} of {total} outer iterations diverged")]
    TrainingFailure { divergent: usize, total: usize },

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("enumeration of {requested} paths exceeds the limit of {limit}")]
    TooLarge { requested: u128, limit: u128 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
