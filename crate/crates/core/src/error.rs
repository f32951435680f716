use thiserror::Error;

use crate::index_space::MultiIndex;

/// Errors produced by the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid multi-index ({0}, {1}): both components must be >= 2")]
    InvalidIndex(i64, i64),

    #[error("index {index} out of range 1..={max}")]
    OutOfRange { index: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not numerically positive definite (pivot {pivot:e} at position {position})")]
    NotPositiveDefinite { position: usize, pivot: f64 },

    #[error("{method} did not converge after {iterations} iterations (best estimate {estimate:e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        estimate: f64,
    },

    #[error("quadrature with {nodes} nodes cannot integrate degree {degree} exactly")]
    InsufficientQuadrature { nodes: usize, degree: usize },

    #[error("overflow while evaluating {0}")]
    Overflow(&'static str),

    #[error("assumption violated: ||L^T E|| = {0} must be < 1")]
    RieszAssumption(f64),

    #[error("threshold bisection failed to bracket tol_G = {tol_g} (norm at smallest threshold {norm})")]
    BisectionBracket { tol_g: f64, norm: f64 },

    #[error("index {index} requires degree {degree} beyond p_max = {p_max}")]
    PmaxExhausted {
        index: MultiIndex,
        degree: u32,
        p_max: u32,
    },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
