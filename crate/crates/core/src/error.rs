//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty batch: both offline and online row sets are empty")]
    EmptyBatch,

    #[error("non-finite loss in regression solve (bad lambda or learning rate?)")]
    NonFiniteLoss,

    #[error("conjugate gradient produced a non-finite iterate (matvec not PSD?)")]
    NonFiniteIterate,

    #[error("online sample budget exceeded")]
    SampleBudgetExceeded,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
