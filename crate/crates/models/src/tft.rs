//! Temporal Fusion Transformer.
//!
//! Per input type there is one variable selection network (past-known,
//! future-known, static). The past VSN feeds the encoder together with the
//! future VSN output over the input window; the decoder sees the future
//! VSN alone. Static covariates, when present, produce four context
//! vectors: variable selection, LSTM initial hidden and cell state, and
//! static enrichment.

use gridcast_nn::{
    causal_mask, Dense, Embedding, Glu, Grn, InterpretableMha, LayerNorm, Lstm, NnError, ParameterStore,
    Tape, Var, Vsn,
};

use crate::config::TftConfig;
use crate::data::Batch;
use crate::train::Net;

#[derive(Debug, Clone)]
struct StaticEncoder {
    embeddings: Vec<Embedding>,
    vsn: Vsn,
    selection: Grn,
    enrichment: Grn,
    state_h: Grn,
    state_c: Grn,
}

#[derive(Debug, Clone)]
pub(crate) struct TftNet {
    k: usize,
    h: usize,
    past_embed: Vec<Dense>,
    known_embed: Vec<Dense>,
    statics: Option<StaticEncoder>,
    past_vsn: Vsn,
    known_vsn: Vsn,
    encoder: Lstm,
    decoder: Lstm,
    lstm_gate: Glu,
    lstm_norm: LayerNorm,
    enrichment: Grn,
    attention: InterpretableMha,
    attention_gate: Glu,
    attention_norm: LayerNorm,
    positionwise: Grn,
    output_gate: Glu,
    output_norm: LayerNorm,
    head: Dense,
    dropout: f64,
}

/// Forward pass plus the interpretable intermediate weights.
pub(crate) struct TftOutput {
    /// `batch x h`
    pub prediction: Var,
    /// `(k * batch) x P`
    pub past_weights: Var,
    /// `((k + h) * batch) x F`
    pub known_weights: Var,
    /// `batch x S`
    pub static_weights: Option<Var>,
    /// One `h x (k + h)` matrix per sample.
    pub attention: Vec<Var>,
}

impl TftNet {
    pub fn new(
        store: &mut ParameterStore,
        cfg: &TftConfig,
        n_past: usize,
        n_known: usize,
        static_cardinalities: &[usize],
    ) -> Result<Self, NnError> {
        let d = cfg.hidden_size;
        let p = cfg.dropout;
        let past_embed = (0..n_past)
            .map(|i| Dense::new(store, &format!("embed.past{i}"), 1, d, true))
            .collect::<Result<_, _>>()?;
        let known_embed = (0..n_known)
            .map(|i| Dense::new(store, &format!("embed.known{i}"), 1, d, true))
            .collect::<Result<_, _>>()?;
        let statics = if static_cardinalities.is_empty() {
            None
        } else {
            let embeddings = static_cardinalities
                .iter()
                .enumerate()
                .map(|(i, &c)| Embedding::new(store, &format!("embed.static{i}"), c, d))
                .collect::<Result<_, _>>()?;
            Some(StaticEncoder {
                embeddings,
                vsn: Vsn::new(store, "vsn.static", static_cardinalities.len(), d, None, p)?,
                selection: Grn::new(store, "context.selection", d, d, d, None, p)?,
                enrichment: Grn::new(store, "context.enrichment", d, d, d, None, p)?,
                state_h: Grn::new(store, "context.state_h", d, d, d, None, p)?,
                state_c: Grn::new(store, "context.state_c", d, d, d, None, p)?,
            })
        };
        let ctx = statics.as_ref().map(|_| d);
        Ok(Self {
            k: cfg.input_window,
            h: cfg.horizon,
            past_embed,
            known_embed,
            past_vsn: Vsn::new(store, "vsn.past", n_past, d, ctx, p)?,
            known_vsn: Vsn::new(store, "vsn.known", n_known, d, ctx, p)?,
            statics,
            encoder: Lstm::new(store, "encoder", d, d, cfg.lstm_layers, p)?,
            decoder: Lstm::new(store, "decoder", d, d, cfg.lstm_layers, p)?,
            lstm_gate: Glu::new(store, "lstm_gate", d, d)?,
            lstm_norm: LayerNorm::new(store, "lstm_norm", d)?,
            enrichment: Grn::new(store, "enrichment", d, d, d, ctx, p)?,
            attention: InterpretableMha::new(store, "attention", d, cfg.attention_heads, p)?,
            attention_gate: Glu::new(store, "attention_gate", d, d)?,
            attention_norm: LayerNorm::new(store, "attention_norm", d)?,
            positionwise: Grn::new(store, "positionwise", d, d, d, None, p)?,
            output_gate: Glu::new(store, "output_gate", d, d)?,
            output_norm: LayerNorm::new(store, "output_norm", d)?,
            head: Dense::new(store, "head", d, 1, true)?,
            dropout: p,
        })
    }

    /// Embed every column of a time-major matrix with its own linear map.
    fn embed(tape: &mut Tape, store: &ParameterStore, layers: &[Dense], x: Var) -> Result<Vec<Var>, NnError> {
        layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let col = tape.slice_cols(x, i, 1);
                layer.forward(tape, store, col)
            })
            .collect()
    }

    /// Repeat `batch x d` rows for each of `steps` time-major steps.
    fn broadcast(tape: &mut Tape, v: Var, batch: usize, steps: usize) -> Var {
        let idx: Vec<usize> = (0..steps).flat_map(|_| 0..batch).collect();
        tape.gather_rows(v, &idx)
    }

    pub fn run(&self, tape: &mut Tape, store: &ParameterStore, batch: &Batch) -> Result<TftOutput, NnError> {
        let (b, k, h) = (batch.batch, self.k, self.h);
        if batch.k != k || batch.h != h {
            return Err(NnError::ShapeMismatch {
                op: "tft",
                detail: format!("batch has k={} h={}, model k={k} h={h}", batch.k, batch.h),
            });
        }
        let t = k + h;

        let (contexts, static_weights) = match &self.statics {
            Some(enc) => {
                let embedded = enc
                    .embeddings
                    .iter()
                    .zip(&batch.statics)
                    .map(|(e, ids)| e.forward(tape, store, ids))
                    .collect::<Result<Vec<_>, _>>()?;
                let (s, w) = enc.vsn.forward(tape, store, &embedded, None)?;
                let (sel, _) = enc.selection.forward(tape, store, s, None)?;
                let (enr, _) = enc.enrichment.forward(tape, store, s, None)?;
                let (sh, _) = enc.state_h.forward(tape, store, s, None)?;
                let (sc, _) = enc.state_c.forward(tape, store, s, None)?;
                (Some((sel, enr, sh, sc)), Some(w))
            }
            None => (None, None),
        };

        let past = tape.constant_matrix(k * b, batch.n_past, batch.past.clone());
        let known = tape.constant_matrix(t * b, batch.n_known, batch.known.clone());
        let past_emb = Self::embed(tape, store, &self.past_embed, past)?;
        let known_emb = Self::embed(tape, store, &self.known_embed, known)?;

        let sel_past = contexts.map(|c| Self::broadcast(tape, c.0, b, k));
        let sel_all = contexts.map(|c| Self::broadcast(tape, c.0, b, t));
        let (past_sel, past_weights) = self.past_vsn.forward(tape, store, &past_emb, sel_past)?;
        let (known_sel, known_weights) = self.known_vsn.forward(tape, store, &known_emb, sel_all)?;

        let known_past = tape.slice_rows(known_sel, 0, k * b);
        let encoder_in = tape.add(past_sel, known_past);
        let decoder_in = tape.slice_rows(known_sel, k * b, h * b);

        let init: Option<Vec<(Var, Var)>> = contexts.map(|c| vec![(c.2, c.3); self.encoder.layers.len()]);
        let (enc_out, finals) = self
            .encoder
            .forward_seq(tape, store, encoder_in, b, init.as_deref())?;
        let (dec_out, _) = self
            .decoder
            .forward_seq(tape, store, decoder_in, b, Some(&finals))?;

        let lstm_out = tape.concat_rows(&[enc_out, dec_out]);
        let selected = tape.concat_rows(&[encoder_in, decoder_in]);
        let lstm_out = tape.dropout(lstm_out, self.dropout);
        let (gated, _) = self.lstm_gate.forward(tape, store, lstm_out)?;
        let sum = tape.add(gated, selected);
        let temporal = self.lstm_norm.forward(tape, store, sum)?;

        let enr_ctx = contexts.map(|c| Self::broadcast(tape, c.1, b, t));
        let (enriched, _) = self.enrichment.forward(tape, store, temporal, enr_ctx)?;

        let mask = causal_mask(h, t, k);
        let (attended, attention) = self
            .attention
            .forward_batch(tape, store, enriched, b, k, Some(&mask))?;
        let attended = tape.dropout(attended, self.dropout);
        let (gated, _) = self.attention_gate.forward(tape, store, attended)?;
        let enriched_dec = tape.slice_rows(enriched, k * b, h * b);
        let sum = tape.add(gated, enriched_dec);
        let post = self.attention_norm.forward(tape, store, sum)?;

        let (pw, _) = self.positionwise.forward(tape, store, post, None)?;
        let pw = tape.dropout(pw, self.dropout);
        let (gated, _) = self.output_gate.forward(tape, store, pw)?;
        let temporal_dec = tape.slice_rows(temporal, k * b, h * b);
        let sum = tape.add(gated, temporal_dec);
        let out = self.output_norm.forward(tape, store, sum)?;

        // (h*b) x 1 time-major -> b x h
        let y = self.head.forward(tape, store, out)?;
        let y = tape.reshape(y, h, b);
        let prediction = tape.transpose(y);
        Ok(TftOutput {
            prediction,
            past_weights,
            known_weights,
            static_weights,
            attention,
        })
    }
}

impl Net for TftNet {
    fn forward(&self, tape: &mut Tape, store: &ParameterStore, batch: &Batch) -> Result<Var, NnError> {
        Ok(self.run(tape, store, batch)?.prediction)
    }
}
