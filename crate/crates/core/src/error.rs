use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("requested rank {rank} exceeds the maximum {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible density {target} for {topology}: {reason}")]
    Infeasible { topology: &'static str, target: f64, reason: String },

    #[error("loading component {component} vanished after soft-thresholding at omega={omega}")]
    DegenerateComponent { component: usize, omega: f64 },

    #[error("sub-maximal degree node set has {available} nodes, need {needed}")]
    InsufficientBoundary { needed: usize, available: usize },

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("no penalty on the path produced a usable fit")]
    AllFitsFailed,

    #[error("loadings are rank deficient beyond ridge repair")]
    DegenerateLoadings,

    #[error("matrix does not have full column rank")]
    RankDeficient,

    #[error("test data has zero variance inside the {0} subspace")]
    ZeroSubspaceVariance(&'static str),

    #[error("test data has zero total variance")]
    ZeroVariance,

    #[error("loading matrix has no columns")]
    EmptyLoadings,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("`{field}` out of range: {message}")]
    RangeViolation { field: String, message: String },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
