//! Minimal reverse-mode differentiable compute for the gridcast forecasters.
//!
//! Values live on a [`Tape`] as 2-D `f64` matrices; parameters live in a
//! [`ParameterStore`] and receive gradients when [`Tape::backward`] runs.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
mod store;
mod tape;
mod tensor;

use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint};
pub use gradcheck::{grad_check, grad_check_report, GradCheckReport};
pub use layers::{
    causal_mask, mse_loss, Dense, Embedding, Glu, Grn, InterpretableMha, LayerNorm, Lstm, LstmLayer,
    LstmState, Vsn,
};
pub use optim::{clip_grad_norm, Adam};
pub use store::{ParamId, ParameterStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("variable selection needs at least one variable")]
    EmptyVariableList,
    #[error("attention mask blocks every position in row {row}")]
    MaskAllBlocked { row: usize },
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("parameter `{0}` already exists")]
    DuplicateParameter(String),
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
