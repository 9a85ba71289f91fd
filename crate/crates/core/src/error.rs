use thiserror::Error;

/// Errors raised by the core algorithms.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: entry ({row},{col}) differs from its mirrored conjugate")]
    NotHermitian { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigendecomposition did not converge (off-diagonal residual {residual:.3e})")]
    NoConvergence { residual: f64 },

    #[error("parameter regime violated: {0}")]
    Regime(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate iterate: {0}")]
    Degenerate(String),

    #[error("mismatched distributions: {0}")]
    Mismatch(String),

    #[error("algorithm aborted: {0}")]
    Aborted(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn regime(msg: impl Into<String>) -> Error {
    Error::Regime(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
