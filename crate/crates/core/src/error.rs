use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("padding contract violated: support reaches {extent:.4} but must stay within {limit:.4}")]
    PaddingContract { extent: f64, limit: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("projection annihilated the random draw after {attempts} attempts")]
    ProjectionFailed { attempts: usize },
    #[error("inconsistent estimate: {0}")]
    Inconsistent(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown check `{0}`")]
    UnknownCheck(String),
    #[error("certificate failed: {0}")]
    Certificate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
