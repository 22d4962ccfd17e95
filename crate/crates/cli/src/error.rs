use std::process::ExitCode;

/// Failures that map to dedicated exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_CHECK_FAILED: u8 = 4;

pub fn exit_code(err: &anyhow::Error) -> ExitCode {
    ExitCode::from(exit_status(err))
}

pub fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Config(_) => EXIT_CONFIG,
                CliError::Divergence(_) => EXIT_DIVERGENCE,
                CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
            };
        }
        if let Some(e) = cause.downcast_ref::<distill_lab::Error>() {
            return match e {
                distill_lab::Error::TrainingDiverged { .. } | distill_lab::Error::NonFinite(_) => {
                    EXIT_DIVERGENCE
                }
                _ => EXIT_OTHER,
            };
        }
    }
    EXIT_OTHER
}
