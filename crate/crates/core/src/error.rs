use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("penalty is not differentiable at t = {0}")]
    NotDifferentiable(f64),

    #[error("{0} has no finite weak-convexity constant and is rejected in strict mode")]
    UnsupportedPenalty(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("g-ball projection did not converge after {0} bisection steps")]
    ProjectionNotConverged(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("restricted strong convexity probe failed: {0}")]
    DegenerateProbe(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
