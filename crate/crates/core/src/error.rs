use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scores {0:?} contain a duplicate; the competition is already tied")]
    AlreadyTied(Vec<i64>),

    #[error("state {0:?} is tied")]
    TiedState(Vec<i64>),

    #[error("winner {winner} out of range 1..={m}")]
    WinnerOutOfRange { winner: usize, m: usize },

    #[error("solver did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("exact solve failed: {0}")]
    ExactSolve(String),

    #[error("unsupported ansatz: {0}")]
    UnsupportedAnsatz(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
