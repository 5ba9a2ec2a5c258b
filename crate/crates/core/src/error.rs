use thiserror::Error;

use crate::dataset::Space;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error")]
    Io(#[from] std::io::Error),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: value {value} is outside [0, 1] for a prediction-space sample")]
    ValueOutOfRange { row: usize, value: f64 },

    #[error("row {row}: label {label} is not 0 or 1")]
    InvalidLabel { row: usize, label: String },

    #[error("row {row}: weight {weight} must be finite and strictly positive")]
    InvalidWeight { row: usize, weight: f64 },

    #[error("sample is empty")]
    EmptySample,

    #[error("feature dimension mismatch: expected {expected}, found {found} at row {row}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("expected a {expected:?} sample, got {found:?}")]
    WrongSpace { expected: Space, found: Space },

    #[error("chain problem is infeasible at knot {knot}")]
    Infeasible { knot: usize },

    #[error("chain problem is unbounded: {0}")]
    Unbounded(String),

    #[error("invalid chain problem: {0}")]
    InvalidProblem(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("brute-force oracle limit: {0}")]
    OracleLimit(String),

    #[error("function violates its declared constraints: {0}")]
    ConstraintViolation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("logistic regression parameters diverge: {0}")]
    DivergingParameters(String),

    #[error("theorem guarantee violated: {0}")]
    TheoremViolation(String),

    #[error("json error")]
    Json(#[from] serde_json::Error),

    #[error("csv error")]
    Csv(#[from] csv::Error),
}
