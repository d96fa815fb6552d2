use thiserror::Error;

/// Errors raised by the aggregation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("infeasible factor pair: {0}")]
    Infeasible(String),

    #[error("objective is not differentiable: column {column} of U has zero norm")]
    NotDifferentiable { column: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("no data left: {0}")]
    EmptyData(String),

    #[error("degenerate regression: {0}")]
    DegenerateFit(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected: expected.into(),
            found: found.into(),
        }
    }
}
