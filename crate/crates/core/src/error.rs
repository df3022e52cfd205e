use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes or out-of-range settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// Model parameters outside the region where a computation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid caller input (empty grids, zero point counts, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("inner iteration did not converge at step {step} (max change {residual:e})")]
    NotConverged { step: usize, residual: f64 },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
