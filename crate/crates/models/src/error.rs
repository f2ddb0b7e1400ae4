use gridcast_core::preprocess::Schema;
use gridcast_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: `{field}` {message}")]
    Config { field: &'static str, message: String },
    #[error("covariate schema differs from training: expected {expected:?}, got {found:?}")]
    SchemaMismatch {
        expected: Box<Schema>,
        found: Box<Schema>,
    },
    #[error("non-finite training loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("window too short: need {needed} hours of {what}, got {got}")]
    WindowTooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("{what} has {got} columns, the model expects {expected}")]
    WindowWidth {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("series too short: need {needed} values, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("ARIMA estimation did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("series {index} (`{id}`) is not part of this model")]
    UnknownSeries { index: usize, id: String },
    #[error("no training windows: {0}")]
    NoTrainingWindows(String),
    #[error("{0} is only available for TFT models")]
    Unsupported(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl ModelError {
    pub(crate) fn config(field: &'static str, message: impl Into<String>) -> Self {
        ModelError::Config {
            field,
            message: message.into(),
        }
    }
}
