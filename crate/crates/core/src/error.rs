use thiserror::Error;

pub type Result<T> = std::result::Result<T, SglError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SglError {
    #[error("non-finite value {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("matrix value count {got} does not match {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("hessian not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("hessian not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
}

impl SglError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SglError::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        SglError::Shape(msg.into())
    }
}
