use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("construction failed for column {column}: {reason}")]
    Construction { column: usize, reason: String },

    #[error("matrix is singular or numerically singular: {0}")]
    Singular(String),

    #[error("recovery threshold not met: have {have} responses, need {need}")]
    ThresholdNotMet { have: usize, need: usize },

    #[error("round {round}: recovery threshold not met: have {have} responses, need {need}")]
    RoundThresholdNotMet { round: usize, have: usize, need: usize },

    #[error("solver diverged at iteration {iteration}{}", column.map(|c| format!(" (column {c})")).unwrap_or_default())]
    Divergence { iteration: usize, column: Option<usize> },

    #[error("CG breakdown at iteration {iteration}: non-positive curvature")]
    NumericalRank { iteration: usize },

    #[error("numerical integrity check failed: {0}")]
    NumericalIntegrity(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("worker {worker} is missing block {block}")]
    IncompleteTask { worker: usize, block: usize },

    #[error("generator failed MDS verification: {0}")]
    UnusableGenerator(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Process exit codes, also used as FFI status codes.
pub mod codes {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const THRESHOLD: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

impl Error {
    pub fn code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Format(_) | Error::Parameter(_) => codes::CONFIG,
            Error::ThresholdNotMet { .. } | Error::RoundThresholdNotMet { .. } => codes::THRESHOLD,
            Error::NumericalIntegrity(_)
            | Error::Singular(_)
            | Error::Divergence { .. }
            | Error::NumericalRank { .. }
            | Error::UnusableGenerator(_) => codes::NUMERICAL,
            _ => codes::OTHER,
        }
    }
}
