use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("point is off the manifold (orthonormality residual {residual:.3e})")]
    OffManifold { residual: f64 },

    #[error("tangent vectors are attached to different base points")]
    BaseMismatch,

    #[error("constraint gradients are linearly dependent (LICQ fails) at rows {indices:?}")]
    LicqViolation { indices: Vec<usize> },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("starting point is infeasible (equality residual {residual_eq:.3e}, inequality residual {residual_ineq:.3e})")]
    InfeasibleStart { residual_eq: f64, residual_ineq: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dims(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}
