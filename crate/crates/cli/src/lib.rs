//! Batch front end: CSV ingestion, estimation with fixed or cross-validated
//! λ, and simulation studies driven by a config file.

pub mod estimate;
pub mod ingest;
pub mod output;
pub mod simulate;

use std::process::ExitCode;

pub use estimate::{cmd_estimate, EstimateArgs, LambdaChoice, Manifest};
pub use ingest::{export, ingest, ingest_path, IngestError};
pub use simulate::{cmd_simulate, SimulateArgs, SimulationFile};

/// What went wrong, coarse enough to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Input,
    Solver,
    Config,
}

impl Failure {
    pub fn code(self) -> u8 {
        match self {
            Failure::Input => 2,
            Failure::Solver => 3,
            Failure::Config => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub failure: Failure,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            failure: Failure::Input,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self {
            failure: Failure::Config,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.failure.code())
    }
}

impl From<repcov::Error> for CliError {
    fn from(e: repcov::Error) -> Self {
        use repcov::Error as E;
        let failure = match &e {
            E::NotPositiveDefinite { .. } | E::EigenFailure | E::MaxItersExceeded { .. } => Failure::Solver,
            E::InvalidParameter(_) => Failure::Config,
            _ => Failure::Input,
        };
        Self {
            failure,
            message: e.to_string(),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Data(inner) => inner.into(),
            other => CliError::input(other.to_string()),
        }
    }
}

pub(crate) fn write_failed(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::input(format!("cannot write {}: {e}", path.display()))
}
