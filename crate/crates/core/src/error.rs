use thiserror::Error;

/// Errors produced by the model, estimation and planning routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("context or action id out of range: {0}")]
    OutOfRange(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("metric requires exact permutation search: S = {0} exceeds the limit of 8")]
    TooManyStates(usize),

    #[error("no {eta}-regular instance found after {attempts} attempts")]
    RegularityNotReached { eta: f64, attempts: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("k-medians needs at least {needed} distinct nonzero rows, found {found}")]
    NotEnoughRows { needed: usize, found: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
