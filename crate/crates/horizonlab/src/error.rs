use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The trajectory left every compact set before the requested time.
    #[error("trajectory escaped at t = {escape_time} before requested time {requested}")]
    EscapeBefore { escape_time: f64, requested: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
