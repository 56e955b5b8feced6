use thiserror::Error;

/// Errors surfaced by the library. Solver non-convergence is reported through
/// [`crate::solvers::SolveReport`] rather than this type whenever a partial
/// result is still meaningful.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("fields or operators live on different grids")]
    GridMismatch,

    #[error("operator kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("fractional order mismatch: {0} vs {1}")]
    OrderMismatch(f64, f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("overflow evaluating {what} at argument {arg:e}")]
    Overflow { what: &'static str, arg: f64 },

    #[error("zero field where a nonzero field is required")]
    ZeroField,

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("first eigenvector changes sign (min nodal value {min:e})")]
    SignedEigenvector { min: f64 },

    #[error("mountain-pass geometry violated: {0}")]
    Geometry(String),

    #[error("no sign change of the energy along the ray up to t = {t_max}")]
    NoSignChange { t_max: f64 },

    #[error("threshold bracket invalid: {0}")]
    NoBracket(String),

    #[error("binary format error: {0}")]
    Format(String),

    #[error("dimension mismatch: file has d = {file}, grid has d = {grid}")]
    DimensionMismatch { file: u32, grid: u32 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.into(),
        reason: reason.into(),
    }
}
