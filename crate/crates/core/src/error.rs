use thiserror::Error;

/// Errors produced by the numerical kernels.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("non-finite input in {context}")]
    NonFinite { context: String },

    #[error("fields live on incompatible grids ({left} vs {right})")]
    GridMismatch { left: String, right: String },

    #[error("domain error in {term}: {detail}")]
    Domain { term: String, detail: String },

    #[error("singular linear system in {context}")]
    Singular { context: String },

    #[error("no convergence in {context} (residual {residual:.3e} after {iterations} iterations)")]
    NoConvergence {
        context: String,
        residual: f64,
        iterations: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error in {context}: {detail}")]
    Format { context: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
