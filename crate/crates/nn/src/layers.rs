//! Layer set used by the TFT and LSTM forecasters.
//!
//! Sequences are carried time-major: a batch of `B` sequences of length `T`
//! is a `(T*B) x width` matrix whose row `t*B + b` is step `t` of sample `b`.
//! Position-wise layers (dense, GRN, VSN) then run on the whole matrix at once.

use crate::store::{ParamId, ParameterStore};
use crate::tape::{Tape, Var};
use crate::{shape_err, NnError};

fn expect_cols(tape: &Tape, x: Var, cols: usize, op: &'static str) -> Result<(), NnError> {
    if tape.cols(x) != cols {
        return Err(shape_err(
            op,
            format!("expected {cols} columns, got {:?}", tape.shape(x)),
        ));
    }
    Ok(())
}

/// `y = x W + b`
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
    ) -> Result<Self, NnError> {
        let weight = store.add_uniform(&format!("{name}.w"), &[input, output], input)?;
        let bias = if bias {
            Some(store.add_uniform(&format!("{name}.b"), &[1, output], input)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var, NnError> {
        expect_cols(tape, x, self.input, "dense")?;
        let w = tape.param(store, self.weight);
        let y = tape.matmul(x, w);
        Ok(match self.bias {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add_row(y, b)
            }
            None => y,
        })
    }
}

/// Lookup table for categorical inputs.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub cardinality: usize,
    pub width: usize,
}

impl Embedding {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        cardinality: usize,
        width: usize,
    ) -> Result<Self, NnError> {
        let table = store.add_uniform(&format!("{name}.table"), &[cardinality, width], 1)?;
        Ok(Self {
            table,
            cardinality,
            width,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, ids: &[usize]) -> Result<Var, NnError> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.cardinality) {
            return Err(shape_err(
                "embedding",
                format!("id {bad} outside cardinality {}", self.cardinality),
            ));
        }
        let t = tape.param(store, self.table);
        Ok(tape.gather_rows(t, ids))
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
    pub width: usize,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParameterStore, name: &str, width: usize) -> Result<Self, NnError> {
        Ok(Self {
            gain: store.add_constant(&format!("{name}.gain"), &[1, width], 1.0)?,
            shift: store.add_constant(&format!("{name}.shift"), &[1, width], 0.0)?,
            width,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var, NnError> {
        expect_cols(tape, x, self.width, "layer_norm")?;
        let n = tape.normalize_rows(x, Self::EPS);
        let g = tape.param(store, self.gain);
        let s = tape.param(store, self.shift);
        let y = tape.mul_row(n, g);
        Ok(tape.add_row(y, s))
    }
}

/// Gated linear unit `(x W_v + b_v) * sigmoid(x W_g + b_g)`.
#[derive(Debug, Clone)]
pub struct Glu {
    pub value: Dense,
    pub gate: Dense,
}

impl Glu {
    pub fn new(store: &mut ParameterStore, name: &str, input: usize, output: usize) -> Result<Self, NnError> {
        Ok(Self {
            value: Dense::new(store, &format!("{name}.value"), input, output, true)?,
            gate: Dense::new(store, &format!("{name}.gate"), input, output, true)?,
        })
    }

    /// Returns `(output, gate activations)`.
    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<(Var, Var), NnError> {
        let v = self.value.forward(tape, store, x)?;
        let g = self.gate.forward(tape, store, x)?;
        let g = tape.sigmoid(g);
        Ok((tape.mul(v, g), g))
    }
}

/// Gated residual network:
/// `LayerNorm(skip(a) + GLU(dropout(W1 ELU(W2 a + W3 c + b2) + b1)))`.
#[derive(Debug, Clone)]
pub struct Grn {
    pub skip: Option<Dense>,
    pub fc_input: Dense,
    pub fc_context: Option<Dense>,
    pub fc_hidden: Dense,
    pub glu: Glu,
    pub norm: LayerNorm,
    pub dropout: f64,
    pub input: usize,
    pub output: usize,
}

impl Grn {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        context: Option<usize>,
        dropout: f64,
    ) -> Result<Self, NnError> {
        let skip = if input != output {
            Some(Dense::new(store, &format!("{name}.skip"), input, output, true)?)
        } else {
            None
        };
        let fc_context = match context {
            Some(c) => Some(Dense::new(store, &format!("{name}.context"), c, hidden, false)?),
            None => None,
        };
        Ok(Self {
            skip,
            fc_input: Dense::new(store, &format!("{name}.fc1"), input, hidden, true)?,
            fc_context,
            fc_hidden: Dense::new(store, &format!("{name}.fc2"), hidden, hidden, true)?,
            glu: Glu::new(store, &format!("{name}.glu"), hidden, output)?,
            norm: LayerNorm::new(store, &format!("{name}.norm"), output)?,
            dropout,
            input,
            output,
        })
    }

    /// `context`, when given, must have one row per row of `a`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        a: Var,
        context: Option<Var>,
    ) -> Result<(Var, Var), NnError> {
        expect_cols(tape, a, self.input, "grn")?;
        let residual = match &self.skip {
            Some(s) => s.forward(tape, store, a)?,
            None => a,
        };
        let mut h = self.fc_input.forward(tape, store, a)?;
        match (context, &self.fc_context) {
            (Some(c), Some(fc)) => {
                if tape.rows(c) != tape.rows(a) {
                    return Err(shape_err(
                        "grn",
                        format!("context has {} rows, input {}", tape.rows(c), tape.rows(a)),
                    ));
                }
                let hc = fc.forward(tape, store, c)?;
                h = tape.add(h, hc);
            }
            (Some(_), None) => return Err(shape_err("grn", "context given to a context-free GRN")),
            (None, _) => {}
        }
        let h = tape.elu(h);
        let h = self.fc_hidden.forward(tape, store, h)?;
        let h = tape.dropout(h, self.dropout);
        let (gated, gate) = self.glu.forward(tape, store, h)?;
        let sum = tape.add(residual, gated);
        Ok((self.norm.forward(tape, store, sum)?, gate))
    }
}

/// Variable selection network: softmax weights from a GRN over the
/// flattened embeddings, applied to per-variable GRN outputs.
#[derive(Debug, Clone)]
pub struct Vsn {
    pub variables: Vec<Grn>,
    pub selector: Grn,
    pub width: usize,
}

impl Vsn {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        n_vars: usize,
        width: usize,
        context: Option<usize>,
        dropout: f64,
    ) -> Result<Self, NnError> {
        if n_vars == 0 {
            return Err(NnError::EmptyVariableList);
        }
        let selector = Grn::new(
            store,
            &format!("{name}.select"),
            n_vars * width,
            width,
            n_vars,
            context,
            dropout,
        )?;
        let variables = (0..n_vars)
            .map(|v| {
                Grn::new(
                    store,
                    &format!("{name}.var{v}"),
                    width,
                    width,
                    width,
                    None,
                    dropout,
                )
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            variables,
            selector,
            width,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    /// Returns `(combined, weights)`; `weights` has one column per variable
    /// and one simplex row per input row.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        embeddings: &[Var],
        context: Option<Var>,
    ) -> Result<(Var, Var), NnError> {
        if embeddings.is_empty() {
            return Err(NnError::EmptyVariableList);
        }
        if embeddings.len() != self.n_vars() {
            return Err(shape_err(
                "vsn",
                format!("expected {} variables, got {}", self.n_vars(), embeddings.len()),
            ));
        }
        let rows = tape.rows(embeddings[0]);
        for &e in embeddings {
            expect_cols(tape, e, self.width, "vsn")?;
            if tape.rows(e) != rows {
                return Err(shape_err("vsn", "embeddings differ in row count"));
            }
        }
        let flat = tape.concat_cols(embeddings);
        let (logits, _) = self.selector.forward(tape, store, flat, context)?;
        let weights = tape.softmax(logits, None);
        let mut combined = None;
        for (v, (&e, grn)) in embeddings.iter().zip(&self.variables).enumerate() {
            let (processed, _) = grn.forward(tape, store, e, None)?;
            let w = tape.slice_cols(weights, v, 1);
            let term = tape.mul_col(processed, w);
            combined = Some(match combined {
                Some(acc) => tape.add(acc, term),
                None => term,
            });
        }
        Ok((combined.expect("at least one variable"), weights))
    }
}

/// One LSTM layer; gate column order is input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn new(store: &mut ParameterStore, name: &str, input: usize, hidden: usize) -> Result<Self, NnError> {
        Ok(Self {
            w_input: store.add_uniform(&format!("{name}.wx"), &[input, 4 * hidden], hidden)?,
            w_hidden: store.add_uniform(&format!("{name}.wh"), &[hidden, 4 * hidden], hidden)?,
            bias: store.add_uniform(&format!("{name}.b"), &[1, 4 * hidden], hidden)?,
            input,
            hidden,
        })
    }

    /// Column range of the forget gate inside the bias row.
    pub fn forget_gate(&self) -> std::ops::Range<usize> {
        self.hidden..2 * self.hidden
    }

    pub fn cell(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var), NnError> {
        expect_cols(tape, x, self.input, "lstm_cell")?;
        expect_cols(tape, h, self.hidden, "lstm_cell")?;
        expect_cols(tape, c, self.hidden, "lstm_cell")?;
        if tape.rows(x) != tape.rows(h) || tape.rows(h) != tape.rows(c) {
            return Err(shape_err("lstm_cell", "batch sizes of input and state differ"));
        }
        let (wx, wh, b) = (
            tape.param(store, self.w_input),
            tape.param(store, self.w_hidden),
            tape.param(store, self.bias),
        );
        let zx = tape.matmul(x, wx);
        let zh = tape.matmul(h, wh);
        let z = tape.add(zx, zh);
        let z = tape.add_row(z, b);
        let n = self.hidden;
        let i = tape.slice_cols(z, 0, n);
        let i = tape.sigmoid(i);
        let f = tape.slice_cols(z, n, n);
        let f = tape.sigmoid(f);
        let g = tape.slice_cols(z, 2 * n, n);
        let g = tape.tanh(g);
        let o = tape.slice_cols(z, 3 * n, n);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c);
        let write = tape.mul(i, g);
        let c_next = tape.add(keep, write);
        let squashed = tape.tanh(c_next);
        Ok((tape.mul(o, squashed), c_next))
    }

    /// Run over `steps`, sharing parameters across time. Zero initial
    /// state unless `init` is given.
    pub fn unroll(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        steps: &[Var],
        init: Option<(Var, Var)>,
    ) -> Result<(Vec<Var>, (Var, Var)), NnError> {
        let Some(&first) = steps.first() else {
            return Err(shape_err("lstm", "empty sequence"));
        };
        let batch = tape.rows(first);
        let (mut h, mut c) = match init {
            Some(s) => s,
            None => {
                let z = tape.constant_matrix(batch, self.hidden, vec![0.0; batch * self.hidden]);
                (z, z)
            }
        };
        let mut outputs = Vec::with_capacity(steps.len());
        for &x in steps {
            (h, c) = self.cell(tape, store, x, h, c)?;
            outputs.push(h);
        }
        Ok((outputs, (h, c)))
    }
}

/// `(h, c)` of one layer.
pub type LstmState = (Var, Var);

/// Stacked LSTM with dropout between layers.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
    pub dropout: f64,
}

impl Lstm {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
    ) -> Result<Self, NnError> {
        let layers = (0..layers.max(1))
            .map(|l| {
                let width = if l == 0 { input } else { hidden };
                LstmLayer::new(store, &format!("{name}.l{l}"), width, hidden)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { layers, dropout })
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    /// `init`, when given, holds one `(h, c)` per layer.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        steps: &[Var],
        init: Option<&[(Var, Var)]>,
    ) -> Result<(Vec<Var>, Vec<LstmState>), NnError> {
        if let Some(states) = init {
            if states.len() != self.layers.len() {
                return Err(shape_err(
                    "lstm",
                    format!("{} initial states for {} layers", states.len(), self.layers.len()),
                ));
            }
        }
        let mut seq = steps.to_vec();
        let mut finals = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                seq = seq.into_iter().map(|x| tape.dropout(x, self.dropout)).collect();
            }
            let (out, state) = layer.unroll(tape, store, &seq, init.map(|s| s[l]))?;
            seq = out;
            finals.push(state);
        }
        Ok((seq, finals))
    }

    /// Time-major variant: `x` is `(T*batch) x input`, output `(T*batch) x hidden`.
    pub fn forward_seq(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x: Var,
        batch: usize,
        init: Option<&[(Var, Var)]>,
    ) -> Result<(Var, Vec<(Var, Var)>), NnError> {
        let rows = tape.rows(x);
        if batch == 0 || !rows.is_multiple_of(batch) {
            return Err(shape_err(
                "lstm",
                format!("{rows} rows not divisible by batch {batch}"),
            ));
        }
        let steps: Vec<Var> = (0..rows / batch)
            .map(|t| tape.slice_rows(x, t * batch, batch))
            .collect();
        let (out, finals) = self.forward(tape, store, &steps, init)?;
        Ok((tape.concat_rows(&out), finals))
    }
}

/// Multi-head attention with per-head query/key projections and a value
/// projection shared by all heads; head outputs are averaged, so the mean
/// attention matrix fully describes how values are mixed.
#[derive(Debug, Clone)]
pub struct InterpretableMha {
    pub queries: Vec<Dense>,
    pub keys: Vec<Dense>,
    pub value: Dense,
    pub output: Dense,
    pub d_model: usize,
    pub dropout: f64,
}

impl InterpretableMha {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        d_model: usize,
        n_heads: usize,
        dropout: f64,
    ) -> Result<Self, NnError> {
        if n_heads == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(shape_err(
                "attention",
                format!("width {d_model} not divisible by {n_heads} heads"),
            ));
        }
        let d_head = d_model / n_heads;
        let mut queries = Vec::with_capacity(n_heads);
        let mut keys = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            queries.push(Dense::new(store, &format!("{name}.q{h}"), d_model, d_head, true)?);
            keys.push(Dense::new(store, &format!("{name}.k{h}"), d_model, d_head, true)?);
        }
        Ok(Self {
            queries,
            keys,
            value: Dense::new(store, &format!("{name}.v"), d_model, d_head, true)?,
            output: Dense::new(store, &format!("{name}.out"), d_head, d_model, true)?,
            d_model,
            dropout,
        })
    }

    pub fn heads(&self) -> usize {
        self.queries.len()
    }

    fn d_head(&self) -> usize {
        self.d_model / self.heads()
    }

    fn check_mask(mask: Option<&[bool]>, tq: usize, tk: usize) -> Result<(), NnError> {
        if let Some(m) = mask {
            if m.len() != tq * tk {
                return Err(shape_err(
                    "attention",
                    format!("mask has {} entries, expected {tq}x{tk}", m.len()),
                ));
            }
            if let Some(row) = (0..tq).find(|&r| !m[r * tk..(r + 1) * tk].iter().any(|&a| a)) {
                return Err(NnError::MaskAllBlocked { row });
            }
        }
        Ok(())
    }

    /// Head-averaged attention of projected queries over keys/values.
    fn attend(&self, tape: &mut Tape, q: &[Var], k: &[Var], v: Var, mask: Option<&[bool]>) -> (Var, Var) {
        let scale = 1.0 / (self.d_head() as f64).sqrt();
        let inv_heads = 1.0 / self.heads() as f64;
        let mut weights = None;
        for (&qh, &kh) in q.iter().zip(k) {
            let scores = tape.matmul_t(qh, kh);
            let scores = tape.scale(scores, scale);
            let a = tape.softmax(scores, mask);
            weights = Some(match weights {
                Some(acc) => tape.add(acc, a),
                None => a,
            });
        }
        // Values are shared, so averaging heads equals attending with the
        // mean weight matrix.
        let mean = tape.scale(weights.expect("at least one head"), inv_heads);
        let mixed = tape.matmul(mean, v);
        (mixed, mean)
    }

    /// Single sequence: `queries` is `Tq x d`, `keys_values` is `Tk x d`,
    /// `mask` (row-major `Tq x Tk`, `true` = visible). Returns
    /// `(output Tq x d, head-averaged weights Tq x Tk)`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        queries: Var,
        keys_values: Var,
        mask: Option<&[bool]>,
    ) -> Result<(Var, Var), NnError> {
        expect_cols(tape, queries, self.d_model, "attention")?;
        expect_cols(tape, keys_values, self.d_model, "attention")?;
        Self::check_mask(mask, tape.rows(queries), tape.rows(keys_values))?;
        let q = self
            .queries
            .iter()
            .map(|d| d.forward(tape, store, queries))
            .collect::<Result<Vec<_>, _>>()?;
        let k = self
            .keys
            .iter()
            .map(|d| d.forward(tape, store, keys_values))
            .collect::<Result<Vec<_>, _>>()?;
        let v = self.value.forward(tape, store, keys_values)?;
        let (mixed, weights) = self.attend(tape, &q, &k, v, mask);
        let mixed = tape.dropout(mixed, self.dropout);
        Ok((self.output.forward(tape, store, mixed)?, weights))
    }

    /// Self-attention over a time-major batch `seq` of `T` steps, with
    /// queries taken from steps `query_start..T`. `mask` is
    /// `(T - query_start) x T`. Returns the time-major output and one
    /// weight matrix per sample.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        seq: Var,
        batch: usize,
        query_start: usize,
        mask: Option<&[bool]>,
    ) -> Result<(Var, Vec<Var>), NnError> {
        expect_cols(tape, seq, self.d_model, "attention")?;
        let rows = tape.rows(seq);
        if batch == 0 || !rows.is_multiple_of(batch) {
            return Err(shape_err(
                "attention",
                format!("{rows} rows not divisible by batch {batch}"),
            ));
        }
        let steps = rows / batch;
        if query_start >= steps {
            return Err(shape_err("attention", "no query positions"));
        }
        let tq = steps - query_start;
        Self::check_mask(mask, tq, steps)?;
        let q_all = self
            .queries
            .iter()
            .map(|d| d.forward(tape, store, seq))
            .collect::<Result<Vec<_>, _>>()?;
        let k_all = self
            .keys
            .iter()
            .map(|d| d.forward(tape, store, seq))
            .collect::<Result<Vec<_>, _>>()?;
        let v_all = self.value.forward(tape, store, seq)?;
        let mut mixed = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for b in 0..batch {
            let key_rows: Vec<usize> = (0..steps).map(|t| t * batch + b).collect();
            let query_rows = &key_rows[query_start..];
            let q: Vec<Var> = q_all.iter().map(|&x| tape.gather_rows(x, query_rows)).collect();
            let k: Vec<Var> = k_all.iter().map(|&x| tape.gather_rows(x, &key_rows)).collect();
            let v = tape.gather_rows(v_all, &key_rows);
            let (m, w) = self.attend(tape, &q, &k, v, mask);
            mixed.push(m);
            weights.push(w);
        }
        // Sample-major back to time-major.
        let stacked = tape.concat_rows(&mixed);
        let order: Vec<usize> = (0..tq)
            .flat_map(|t| (0..batch).map(move |b| b * tq + t))
            .collect();
        let mixed = tape.gather_rows(stacked, &order);
        let mixed = tape.dropout(mixed, self.dropout);
        Ok((self.output.forward(tape, store, mixed)?, weights))
    }
}

/// Causal mask for `Tq` queries at positions `offset..offset+Tq` over `Tk`
/// keys: query at position `p` sees keys `0..=p`.
pub fn causal_mask(tq: usize, tk: usize, offset: usize) -> Vec<bool> {
    (0..tq)
        .flat_map(|r| (0..tk).map(move |c| c <= r + offset))
        .collect()
}

/// Mean squared error over all entries.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var, NnError> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(shape_err(
            "mse_loss",
            format!(
                "prediction {:?} vs target {:?}",
                tape.shape(pred),
                tape.shape(target)
            ),
        ));
    }
    let d = tape.sub(pred, target);
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{grad_check, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    /// Fixed random projection of an output to a scalar, so every output
    /// coordinate gets a distinct gradient.
    fn project(tape: &mut Tape, y: Var, seed: u64) -> Var {
        let (r, c) = tape.shape(y);
        let w = tape.constant(&random(r, c, seed));
        let p = tape.mul(y, w);
        tape.sum(p)
    }

    #[test]
    fn dense_identity() {
        let mut store = ParameterStore::new(0);
        let d = Dense::new(&mut store, "d", 2, 2, true).unwrap();
        *store.value_mut(d.weight) = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        *store.value_mut(d.bias.unwrap()) = Tensor::zeros(&[1, 2]);
        let mut tape = Tape::new();
        let x = tape.constant_matrix(1, 2, vec![1.0, 0.0]);
        let y = d.forward(&mut tape, &store, x).unwrap();
        assert_eq!(tape.data(y), &[1.0, 0.0]);
    }

    #[test]
    fn dense_bias_gradient_is_ones() {
        let mut store = ParameterStore::new(1);
        let d = Dense::new(&mut store, "d", 3, 2, true).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(&random(4, 3, 9));
        let y = d.forward(&mut tape, &store, x).unwrap();
        let s = tape.sum(y);
        tape.backward(s, &mut store);
        // Four rows each contribute one.
        assert_eq!(store.grad(d.bias.unwrap()).data(), &[4.0, 4.0]);
    }

    #[test]
    fn dense_rejects_wrong_width() {
        let mut store = ParameterStore::new(1);
        let d = Dense::new(&mut store, "d", 3, 2, true).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant_matrix(1, 2, vec![0.0; 2]);
        assert!(matches!(
            d.forward(&mut tape, &store, x),
            Err(NnError::ShapeMismatch { op: "dense", .. })
        ));
    }

    #[test]
    fn dense_gradient_check() {
        let mut store = ParameterStore::new(2);
        let d = Dense::new(&mut store, "d", 5, 3, true).unwrap();
        let x = random(4, 5, 3);
        let err = grad_check(&mut store, 1e-5, |tape, store| {
            let xv = tape.constant(&x);
            let y = d.forward(tape, store, xv)?;
            Ok(project(tape, y, 4))
        })
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn grn_zero_gate_halves_linear_path() {
        let mut store = ParameterStore::new(3);
        let g = Grn::new(&mut store, "g", 8, 8, 8, None, 0.0).unwrap();
        for p in [g.glu.gate.weight, g.glu.gate.bias.unwrap()] {
            store.value_mut(p).data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let x = tape.constant(&random(4, 8, 5));
        let (out, gate) = g.forward(&mut tape, &store, x, None).unwrap();
        assert_eq!(tape.shape(out), (4, 8));
        assert!(tape.data(gate).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn grn_preserves_shape_for_any_hidden() {
        for hidden in [1, 3, 16] {
            let mut store = ParameterStore::new(hidden as u64);
            let g = Grn::new(&mut store, "g", 6, hidden, 6, Some(2), 0.0).unwrap();
            let mut tape = Tape::new();
            let x = tape.constant(&random(5, 6, 1));
            let c = tape.constant(&random(5, 2, 2));
            let (out, _) = g.forward(&mut tape, &store, x, Some(c)).unwrap();
            assert_eq!(tape.shape(out), (5, 6));
        }
    }

    #[test]
    fn grn_gradient_check() {
        let mut store = ParameterStore::new(4);
        let g = Grn::new(&mut store, "g", 8, 8, 8, Some(3), 0.0).unwrap();
        let x = random(4, 8, 6);
        let c = random(4, 3, 7);
        let err = grad_check(&mut store, 1e-5, |tape, store| {
            let xv = tape.constant(&x);
            let cv = tape.constant(&c);
            let (y, _) = g.forward(tape, store, xv, Some(cv))?;
            Ok(project(tape, y, 8))
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn vsn_single_variable_weight_is_one() {
        let mut store = ParameterStore::new(5);
        let v = Vsn::new(&mut store, "v", 1, 4, None, 0.0).unwrap();
        let mut tape = Tape::new();
        let e = tape.constant(&random(3, 4, 1));
        let (_, w) = v.forward(&mut tape, &store, &[e], None).unwrap();
        assert!(tape.data(w).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn vsn_symmetric_variables_split_evenly() {
        let mut store = ParameterStore::new(6);
        let v = Vsn::new(&mut store, "v", 2, 3, None, 0.0).unwrap();
        // Make both selector outputs identical functions of the input, and
        // feed the same embedding twice.
        for id in store.ids().collect::<Vec<_>>() {
            if !store.name(id).starts_with("v.select") {
                continue;
            }
            let t = store.value_mut(id);
            if t.cols() == 2 {
                let rows = t.rows();
                for r in 0..rows {
                    let c0 = t.get(r, 0);
                    t.data_mut()[r * 2 + 1] = c0;
                }
            }
        }
        let mut tape = Tape::new();
        let e = tape.constant(&random(4, 3, 2));
        let (_, w) = v.forward(&mut tape, &store, &[e, e], None).unwrap();
        assert!(tape.data(w).iter().all(|&x| x == 0.5));
    }

    #[test]
    fn vsn_rejects_empty_list() {
        let mut store = ParameterStore::new(0);
        assert_eq!(
            Vsn::new(&mut store, "v", 0, 3, None, 0.0).unwrap_err(),
            NnError::EmptyVariableList
        );
        let v = Vsn::new(&mut store, "v", 1, 3, None, 0.0).unwrap();
        let mut tape = Tape::new();
        assert_eq!(
            v.forward(&mut tape, &store, &[], None).unwrap_err(),
            NnError::EmptyVariableList
        );
    }

    #[test]
    fn vsn_weights_are_simplex_rows() {
        let mut store = ParameterStore::new(7);
        let v = Vsn::new(&mut store, "v", 4, 3, Some(2), 0.0).unwrap();
        let mut tape = Tape::new();
        let es: Vec<Var> = (0..4).map(|i| tape.constant(&random(5, 3, i))).collect();
        let c = tape.constant(&random(5, 2, 9));
        let (_, w) = v.forward(&mut tape, &store, &es, Some(c)).unwrap();
        for row in tape.data(w).chunks(4) {
            assert!(row.iter().all(|&x| x >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn vsn_gradient_check() {
        let mut store = ParameterStore::new(8);
        let v = Vsn::new(&mut store, "v", 3, 4, Some(2), 0.0).unwrap();
        let es: Vec<Tensor> = (0..3).map(|i| random(3, 4, 20 + i)).collect();
        let c = random(3, 2, 30);
        let err = grad_check(&mut store, 1e-5, |tape, store| {
            let vars: Vec<Var> = es.iter().map(|e| tape.constant(e)).collect();
            let cv = tape.constant(&c);
            let (y, w) = v.forward(tape, store, &vars, Some(cv))?;
            let a = project(tape, y, 31);
            let b = project(tape, w, 32);
            Ok(tape.add(a, b))
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn lstm_zero_fixed_point() {
        let mut store = ParameterStore::new(9);
        let l = LstmLayer::new(&mut store, "l", 3, 4).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let x = tape.constant_matrix(2, 3, vec![0.0; 6]);
        let z = tape.constant_matrix(2, 4, vec![0.0; 8]);
        let (h, c) = l.cell(&mut tape, &store, x, z, z).unwrap();
        assert!(tape.data(h).iter().all(|&v| v == 0.0));
        assert!(tape.data(c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell_state() {
        let mut store = ParameterStore::new(10);
        let l = LstmLayer::new(&mut store, "l", 2, 3).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).data_mut().fill(0.0);
        }
        let forget = l.forget_gate();
        store.value_mut(l.bias).data_mut()[forget].fill(10.0);
        let mut tape = Tape::new();
        let x = tape.constant(&random(1, 2, 3));
        let h = tape.constant_matrix(1, 3, vec![0.0; 3]);
        let c = tape.constant_matrix(1, 3, vec![1.5, -2.0, 0.7]);
        let (_, c_next) = l.cell(&mut tape, &store, x, h, c).unwrap();
        for (a, b) in tape.data(c_next).iter().zip([1.5, -2.0, 0.7]) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn lstm_unrolled_gradient_check() {
        let mut store = ParameterStore::new(11);
        let l = Lstm::new(&mut store, "l", 3, 4, 2, 0.0).unwrap();
        let xs: Vec<Tensor> = (0..5).map(|t| random(2, 3, 40 + t)).collect();
        let err = grad_check(&mut store, 1e-5, |tape, store| {
            let steps: Vec<Var> = xs.iter().map(|x| tape.constant(x)).collect();
            let (out, finals) = l.forward(tape, store, &steps, None)?;
            let last = project(tape, *out.last().unwrap(), 50);
            let cell = project(tape, finals[0].1, 51);
            Ok(tape.add(last, cell))
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn attention_single_position() {
        let mut store = ParameterStore::new(12);
        let a = InterpretableMha::new(&mut store, "a", 4, 2, 0.0).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(&random(1, 4, 1));
        let (out, w) = a.forward(&mut tape, &store, x, x, None).unwrap();
        assert_eq!(tape.data(w), &[1.0]);
        assert_eq!(tape.shape(out), (1, 4));
    }

    #[test]
    fn causal_mask_zeroes_future() {
        let mut store = ParameterStore::new(13);
        let a = InterpretableMha::new(&mut store, "a", 4, 2, 0.0).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(&random(6, 4, 2));
        let mask = causal_mask(6, 6, 0);
        let (_, w) = a.forward(&mut tape, &store, x, x, Some(&mask)).unwrap();
        let w = tape.data(w);
        for r in 0..6 {
            for c in 0..6 {
                if c > r {
                    assert_eq!(w[r * 6 + c], 0.0);
                }
            }
            assert!((w[r * 6..(r + 1) * 6].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fully_blocked_row_is_rejected() {
        let mut store = ParameterStore::new(14);
        let a = InterpretableMha::new(&mut store, "a", 4, 1, 0.0).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(&random(2, 4, 3));
        let mask = [true, false, false, false];
        assert_eq!(
            a.forward(&mut tape, &store, x, x, Some(&mask)).unwrap_err(),
            NnError::MaskAllBlocked { row: 1 }
        );
    }

    #[test]
    fn heads_must_divide_width() {
        let mut store = ParameterStore::new(0);
        assert!(InterpretableMha::new(&mut store, "a", 6, 4, 0.0).is_err());
    }

    #[test]
    fn attention_gradient_check() {
        let mut store = ParameterStore::new(15);
        let a = InterpretableMha::new(&mut store, "a", 4, 2, 0.0).unwrap();
        let x = random(6, 4, 4);
        let mask = causal_mask(6, 6, 0);
        let err = grad_check(&mut store, 1e-5, |tape, store| {
            let xv = tape.constant(&x);
            let (y, w) = a.forward(tape, store, xv, xv, Some(&mask))?;
            let p = project(tape, y, 5);
            let q = project(tape, w, 6);
            Ok(tape.add(p, q))
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn batched_attention_matches_per_sample() {
        let mut store = ParameterStore::new(16);
        let a = InterpretableMha::new(&mut store, "a", 4, 2, 0.0).unwrap();
        let (batch, steps, start) = (3, 5, 2);
        let seq = random(steps * batch, 4, 7);
        let mask = causal_mask(steps - start, steps, start);
        let mut tape = Tape::new();
        let s = tape.constant(&seq);
        let (out, weights) = a
            .forward_batch(&mut tape, &store, s, batch, start, Some(&mask))
            .unwrap();
        let out = tape.value(out);
        for (b, weight) in weights.iter().enumerate() {
            let rows: Vec<usize> = (0..steps).map(|t| t * batch + b).collect();
            let kv = tape.gather_rows(s, &rows);
            let q = tape.gather_rows(s, &rows[start..]);
            let (single, w) = a.forward(&mut tape, &store, q, kv, Some(&mask)).unwrap();
            assert_eq!(tape.data(w), tape.data(*weight));
            for t in 0..steps - start {
                let got = out.row(t * batch + b);
                let want = &tape.data(single)[t * 4..(t + 1) * 4];
                for (x, y) in got.iter().zip(want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mse_examples() {
        let mut tape = Tape::new();
        let p = tape.constant_matrix(1, 1, vec![3.0]);
        let t = tape.constant_matrix(1, 1, vec![1.0]);
        let l = mse_loss(&mut tape, p, t).unwrap();
        assert_eq!(tape.scalar(l), 4.0);
        let z = mse_loss(&mut tape, p, p).unwrap();
        assert_eq!(tape.scalar(z), 0.0);
        let wide = tape.constant_matrix(1, 2, vec![0.0; 2]);
        assert!(mse_loss(&mut tape, p, wide).is_err());
    }
}
