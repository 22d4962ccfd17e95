//! Experiment harness for `distill-lab`: configuration, model training, the
//! inversion round trip, the two-marginal comparison, the SDEdit sweep and
//! the acceptance suite.

pub mod acceptance;
pub mod commands;
pub mod config;
mod error;
pub mod figure2;
pub mod invert;
pub mod model;
pub mod output;
pub mod parallel;
pub mod sdedit;

pub use commands::{run, Cli, Command};
pub use config::ExperimentConfig;
pub use error::{
    exit_code, exit_status, CliError, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OTHER,
};
