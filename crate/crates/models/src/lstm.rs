//! Stacked LSTM over the input window with a dense multi-horizon head.

use gridcast_nn::{Dense, Lstm, NnError, ParameterStore, Tape, Var};

use crate::config::LstmConfig;
use crate::data::Batch;
use crate::train::Net;

#[derive(Debug, Clone)]
pub(crate) struct LstmNet {
    k: usize,
    h: usize,
    lstm: Lstm,
    head: Dense,
    dropout: f64,
}

impl LstmNet {
    pub fn new(
        store: &mut ParameterStore,
        cfg: &LstmConfig,
        n_past: usize,
        n_known: usize,
    ) -> Result<Self, NnError> {
        Ok(Self {
            k: cfg.input_window,
            h: cfg.horizon,
            lstm: Lstm::new(
                store,
                "lstm",
                n_past + n_known,
                cfg.hidden_size,
                cfg.num_layers,
                cfg.dropout,
            )?,
            head: Dense::new(store, "head", cfg.hidden_size, cfg.horizon, true)?,
            dropout: cfg.dropout,
        })
    }
}

impl Net for LstmNet {
    fn forward(&self, tape: &mut Tape, store: &ParameterStore, batch: &Batch) -> Result<Var, NnError> {
        let (b, k) = (batch.batch, self.k);
        if batch.k != k || batch.h != self.h {
            return Err(NnError::ShapeMismatch {
                op: "lstm model",
                detail: format!("batch has k={} h={}, model k={k} h={}", batch.k, batch.h, self.h),
            });
        }
        let past = tape.constant_matrix(k * b, batch.n_past, batch.past.clone());
        let known = tape.constant_matrix((k + batch.h) * b, batch.n_known, batch.known.clone());
        let known_past = tape.slice_rows(known, 0, k * b);
        let x = tape.concat_cols(&[past, known_past]);
        let (out, _) = self.lstm.forward_seq(tape, store, x, b, None)?;
        let last = tape.slice_rows(out, (k - 1) * b, b);
        let last = tape.dropout(last, self.dropout);
        self.head.forward(tape, store, last)
    }
}
