use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("not a probability distribution: {0}")]
    NotStochastic(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("chain is not ergodic: {0}")]
    NonErgodic(String),

    #[error("feature matrix has rank {rank}, needs full column rank {columns}")]
    RankDeficient { rank: usize, columns: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("environment error: {0}")]
    Environment(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
