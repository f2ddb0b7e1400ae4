//! Mini-batch Adam training with early stopping, shared by the neural models.

use gridcast_core::eval::derive_seed;
use gridcast_nn::{clip_grad_norm, mse_loss, Adam, NnError, ParameterStore, Tape, Var};
use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split_origins, Batch, Origin, SeriesData};
use crate::ModelError;

/// Global gradient-norm ceiling applied before every optimizer step.
pub const GRAD_CLIP: f64 = 1.0;
const EVAL_CHUNK: usize = 256;

pub(crate) trait Net {
    /// Normalized predictions, `batch x h`, sample-major.
    fn forward(&self, tape: &mut Tape, store: &ParameterStore, batch: &Batch) -> Result<Var, NnError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Which parameter set was trained (always 0 for a global model).
    pub member: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FitSettings {
    pub k: usize,
    pub h: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub stride: usize,
}

pub(crate) fn batch_loss<N: Net>(
    net: &N,
    tape: &mut Tape,
    store: &ParameterStore,
    batch: &Batch,
) -> Result<Var, NnError> {
    let pred = net.forward(tape, store, batch)?;
    let target = tape.constant_matrix(batch.batch, batch.h, batch.target.clone());
    mse_loss(tape, pred, target)
}

/// Mean loss over `origins` in evaluation mode.
fn evaluate<N: Net>(
    net: &N,
    store: &ParameterStore,
    data: &[SeriesData],
    origins: &[Origin],
    s: &FitSettings,
) -> Result<f64, NnError> {
    let mut total = 0.0;
    for chunk in origins.chunks(EVAL_CHUNK) {
        let batch = Batch::assemble(data, chunk, s.k, s.h);
        let mut tape = Tape::new();
        let loss = batch_loss(net, &mut tape, store, &batch)?;
        total += tape.scalar(loss) * chunk.len() as f64;
    }
    Ok(total / origins.len() as f64)
}

/// Train `store` in place and leave it at the best validation epoch.
pub(crate) fn fit<N: Net>(
    net: &N,
    store: &mut ParameterStore,
    data: &[SeriesData],
    train_lens: &[usize],
    s: &FitSettings,
    seed: u64,
    member: usize,
) -> Result<Vec<EpochRecord>, ModelError> {
    let (mut train, val) = split_origins(train_lens, s.k, s.h, s.stride);
    if train.is_empty() {
        return Err(ModelError::NoTrainingWindows(format!(
            "training spans {train_lens:?} hold no window of {} input and {} target hours",
            s.k, s.h
        )));
    }
    if val.is_empty() {
        log::warn!("validation tail holds no complete window; early stopping monitors training loss");
    }
    let mut adam = Adam::new(store, s.learning_rate);
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, store.snapshot());
    let mut stale = 0;
    let mut step = 0u64;
    for epoch in 0..s.max_epochs {
        train.shuffle(&mut shuffle);
        let mut total = 0.0;
        for (b, chunk) in train.chunks(s.batch_size).enumerate() {
            let batch = Batch::assemble(data, chunk, s.k, s.h);
            let mut tape = Tape::training(derive_seed(seed, step));
            step += 1;
            let loss = batch_loss(net, &mut tape, store, &batch)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: value,
                });
            }
            total += value * chunk.len() as f64;
            store.zero_grads();
            tape.backward(loss, store);
            clip_grad_norm(store, GRAD_CLIP);
            adam.step(store);
        }
        let train_loss = total / train.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(evaluate(net, store, data, &val, s)?)
        };
        debug!("member {member} epoch {epoch}: train {train_loss:.6} val {val_loss:?}");
        history.push(EpochRecord {
            member,
            epoch,
            train_loss,
            val_loss,
        });
        let monitored = val_loss.unwrap_or(train_loss);
        if monitored < best.0 {
            best = (monitored, store.snapshot());
            stale = 0;
        } else {
            stale += 1;
            if stale >= s.patience {
                break;
            }
        }
    }
    store.restore(best.1);
    store.zero_grads();
    Ok(history)
}

/// Normalized forecasts for each origin, `h` values apiece.
pub(crate) fn predict<N: Net>(
    net: &N,
    store: &ParameterStore,
    data: &[SeriesData],
    origins: &[Origin],
    k: usize,
    h: usize,
) -> Result<Vec<Vec<f64>>, NnError> {
    let mut out = Vec::with_capacity(origins.len());
    for chunk in origins.chunks(EVAL_CHUNK) {
        let batch = Batch::assemble(data, chunk, k, h);
        let mut tape = Tape::new();
        let pred = net.forward(&mut tape, store, &batch)?;
        out.extend(tape.data(pred).chunks(h).map(<[f64]>::to_vec));
    }
    Ok(out)
}
