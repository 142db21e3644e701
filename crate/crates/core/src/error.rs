use thiserror::Error;

#[derive(Debug, Error)]
pub enum SgfError {
    #[error("matrix is not numerically positive definite (pivot {pivot} = {value:e})")]
    NotSpd { pivot: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite entry in dense matrix")]
    NonFinite,

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("sparsity pattern is not symmetric: entry ({row}, {col}) has no mirror")]
    NonSymmetricPattern { row: usize, col: usize },

    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("indefinite operator detected: {0}")]
    IndefiniteDetected(String),

    #[error("field values must be positive and finite (cell {index} = {value})")]
    NonPositiveField { index: usize, value: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("expected {expected} values, found {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank trace mismatch: {0}")]
    TraceMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SgfError>;
