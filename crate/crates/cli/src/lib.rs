//! Command implementations behind the `equilibrium` binary.
//!
//! Each command reads an [`ExperimentConfig`], writes its artifacts into an
//! output directory and returns an [`Outcome`] carrying the process exit code.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_simulate, cmd_solve, cmd_sweep, cmd_verify, gateaux_entries, run_sweep, run_verify,
    Outcome, SweepPoint, SweepSummary, VerifyReport,
};
pub use config::{ExperimentConfig, GateauxCheck, PicardCheck, RunSettings, Sweep};

use equilibrium_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::BlowUp { .. }
            | Error::SingularR { .. }
            | Error::NoConvergence { .. }
            | Error::NonFinite { .. } => CliError::Numerical(e.to_string()),
            Error::InvalidParameter { .. }
            | Error::NonFiniteParameter { .. }
            | Error::GridMismatch(_)
            | Error::NotOnGrid { .. }
            | Error::InvalidInput(_) => CliError::Config(e.to_string()),
        }
    }
}
