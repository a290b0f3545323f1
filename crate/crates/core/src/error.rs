use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("row {row}: response {value} is not 0 or 1")]
    BadResponse { row: usize, value: f64 },

    #[error("row {row}: expected {expected} covariates, found {found}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {col}: non-finite value")]
    NonFiniteValue { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("quadrature supports at most 2 coefficients, got {p}")]
    DimensionTooLarge { p: usize },

    #[error("stationarity residual {residual:e} exceeds the convergence gate")]
    NotConverged { residual: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
