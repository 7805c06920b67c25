use std::process::ExitCode;

use pgdta_core::contact::ContactError;
use pgdta_core::data::DataError;
use pgdta_core::model::ModelError;
use pgdta_core::train::TrainError;
use thiserror::Error;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit 1.
    #[error("{0}")]
    Config(String),
    /// Exit 2.
    #[error("{0}")]
    Data(String),
    /// Exit 3.
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Invariant(_) => 3,
        })
    }

    pub fn data(stage: &str, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{stage}: {e}"))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::data("data", e)
    }
}

impl From<ContactError> for CliError {
    fn from(e: ContactError) -> Self {
        if e.is_invariant_violation() {
            CliError::Invariant(e.to_string())
        } else {
            CliError::data("contact", e)
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(t) => CliError::Invariant(t.to_string()),
            other => CliError::data("model", other),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(m) => CliError::Config(m),
            TrainError::ShapeMismatch(m) => CliError::Invariant(m),
            TrainError::Model(m) => m.into(),
            other => CliError::data("train", other),
        }
    }
}
