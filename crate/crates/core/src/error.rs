use std::fmt;

use serde::Serialize;

/// A single problem found while validating a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// `grid[index] >= grid[index + 1]`.
    GridNotIncreasing { index: usize },
    /// Non-finite grid value.
    NonFiniteGrid { index: usize },
    /// Non-finite observation at curve `i`, replicate `j`, grid point `k`.
    NonFiniteObservation { i: usize, j: usize, k: usize },
    /// Non-finite or negative aggregation weight.
    InvalidWeight { i: usize, c: usize, value: f64 },
    /// Negative (or non-finite) covariance weight.
    InvalidCovarianceWeight { i: usize, c: usize, value: f64 },
    /// The mean weight matrix does not have full column rank.
    RankDeficient { rank: usize, expected: usize },
    /// A table has the wrong shape.
    ShapeMismatch { what: String, expected: usize, got: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GridNotIncreasing { index } => {
                write!(f, "grid not strictly increasing at index {index}")
            }
            Violation::NonFiniteGrid { index } => write!(f, "non-finite grid value at index {index}"),
            Violation::NonFiniteObservation { i, j, k } => {
                write!(f, "non-finite observation at (curve {i}, replicate {j}, point {k})")
            }
            Violation::InvalidWeight { i, c, value } => {
                write!(f, "invalid mean weight r[{i}][{c}] = {value}")
            }
            Violation::InvalidCovarianceWeight { i, c, value } => {
                write!(f, "invalid covariance weight C[{i}][{c}] = {value}")
            }
            Violation::RankDeficient { rank, expected } => {
                write!(f, "weight matrix has rank {rank}, expected {expected}")
            }
            Violation::ShapeMismatch { what, expected, got } => {
                write!(f, "{what}: expected {expected}, got {got}")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("point {t} outside domain [{lo}, {hi}]")]
    OutsideDomain { t: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset validation failed: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("covariance factorization failed{}", curve_suffix(*.curve))]
    Factorization { curve: Option<usize> },

    #[error("chain {chain} aborted at iteration {iteration}: {source}")]
    ChainAborted {
        chain: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBasis(_) => "invalid_basis",
            Error::OutsideDomain { .. } => "outside_domain",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Validation(_) => "validation",
            Error::Factorization { .. } => "numerical",
            Error::ChainAborted { .. } => "chain_aborted",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

fn curve_suffix(curve: Option<usize>) -> String {
    match curve {
        Some(i) => format!(" for curve {i}"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
