use std::path::PathBuf;

/// Errors produced anywhere in the localization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("backward pass requested without a matching forward pass")]
    NoForwardContext,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("iteration cannot converge: {0}")]
    Divergence(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("validation failed for case {case_id}: {reason}")]
    Validation { case_id: String, reason: String },

    #[error("ingestion error for {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
