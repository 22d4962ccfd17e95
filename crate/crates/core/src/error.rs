use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("timestep {t} outside [{lo}, {hi}]")]
    TimestepOutOfRange { t: usize, lo: usize, hi: usize },

    #[error("subsequence index {i} outside [{lo}, {hi}]")]
    IndexOutOfRange { i: usize, lo: usize, hi: usize },

    #[error("invalid subsequence: {0}")]
    InvalidSubsequence(String),

    #[error("degenerate timestep {t}: posterior scale is zero")]
    DegenerateTimestep { t: usize },

    #[error("invalid label {0}")]
    InvalidLabel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate class distribution: {0}")]
    DegenerateCovariance(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: loss {loss}")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
