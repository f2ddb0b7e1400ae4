use std::path::Path;

use gridcast_core::eval::{EvalError, SearchError, StatsError};
use gridcast_core::ingest::IngestError;
use gridcast_core::preprocess::PreprocessError;
use gridcast_core::SeriesError;
use gridcast_models::ModelError;
use thiserror::Error;

/// Failure of a command. Validation and contract failures exit with 1,
/// I/O failures with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io { .. } => 2,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        CliError::Invalid(message.into())
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { path, message } => CliError::Io { path, message },
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { path, source } => CliError::Io {
                path,
                message: source.to_string(),
            },
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::Io { path, message } => CliError::Io { path, message },
            other => CliError::Invalid(other.to_string()),
        }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Invalid(e.to_string())
            }
        }
    )*};
}

invalid_from!(EvalError, SearchError, StatsError, SeriesError);
