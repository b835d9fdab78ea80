use thiserror::Error;

use crate::model::VarKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("duplicate variable block {0}")]
    DuplicateBlock(VarKey),

    #[error("measurement {index} references missing block {key}")]
    DanglingBlock { index: usize, key: VarKey },

    #[error("measurement {index}: {reason}")]
    EndpointMismatch { index: usize, reason: String },

    #[error(
        "measurement {index}: concentration must be strictly positive and finite, got {value}"
    )]
    NonPositiveConcentration { index: usize, value: f64 },

    #[error("empty measurement list")]
    NoMeasurements,

    #[error(
        "row {row} of the unconstrained Jacobian is not an incidence row \
         (expected exactly one +1 and one -1); general basis construction is not supported"
    )]
    NonIncidence { row: usize },

    #[error("sparse Cholesky failed: nonpositive pivot {pivot:e} at column {column}")]
    FactorizationFailure { column: usize, pivot: f64 },

    #[error("dense oracle limited to {cap} rows, model has {rows}")]
    SizeCapExceeded { rows: usize, cap: usize },

    #[error("point is off the manifold: {0}")]
    OffManifold(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }
}
