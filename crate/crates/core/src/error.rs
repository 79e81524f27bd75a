use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeylError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("multi-index order {order} exceeds the configured limit {limit}")]
    OrderOverflow { order: usize, limit: usize },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix A is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },

    #[error("tail check failed: {0}")]
    Tail(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("slow decay: {0}")]
    SlowDecay(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, WeylError>;
