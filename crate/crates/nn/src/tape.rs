//! Tape-based reverse-mode differentiation over 2-D matrices.
//!
//! Every operation appends a node holding its value; node indices are a
//! topological order, so [`Tape::backward`] walks them once in reverse.
//! Shapes are checked with assertions here; the layer API validates user
//! input and reports [`NnError::ShapeMismatch`](crate::NnError) instead.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::store::{ParamId, ParameterStore};
use crate::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Elu(Var),
    Square(Var),
    Softmax(Var),
    Normalize(Var, Vec<f64>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Transpose(Var),
    SumAll(Var),
    MeanAll(Var),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

/// Recorded computation. A tape built with [`Tape::training`] applies
/// dropout; one built with [`Tape::new`] treats dropout as the identity.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    dropout_rng: Option<ChaCha8Rng>,
    visited: usize,
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a (m×k) · bᵀ` where `b` is `n×k`.
fn matmul_t(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ (k×m)ᵀ · b (m×n)`: result `k×n`.
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tape with dropout enabled, masks drawn from `seed`.
    pub fn training(seed: u64) -> Self {
        Self {
            dropout_rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            ..Self::default()
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes visited by the last backward pass.
    pub fn visited(&self) -> usize {
        self.visited
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.0].rows
    }

    pub fn cols(&self, v: Var) -> usize {
        self.nodes[v.0].cols
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn value(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::matrix(n.rows, n.cols, n.value.clone())
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let n = &self.nodes[v.0];
        assert_eq!(n.value.len(), 1, "not a scalar");
        n.value[0]
    }

    /// Constant input; no gradient is propagated past it.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Leaf)
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(rows * cols, data.len(), "constant data length");
        self.push(rows, cols, data, Op::Leaf)
    }

    /// Bind a parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let t = store.value(id);
        let v = self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions");
        let value = matmul(self.data(a), self.data(b), m, k, n);
        self.push(m, n, value, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_t inner dimensions");
        let value = matmul_t(self.data(a), self.data(b), m, k, n);
        self.push(m, n, value, Op::MatMulT(a, b))
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise shapes");
        let (r, c) = self.shape(a);
        let value = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(r, c, value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Add a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "add_row shape");
        let rv = self.data(row);
        let value = self
            .data(a)
            .chunks(c)
            .flat_map(|chunk| chunk.iter().zip(rv).map(|(x, y)| x + y))
            .collect();
        self.push(r, c, value, Op::AddRow(a, row))
    }

    /// Multiply every row of `a` elementwise by a `1×n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "mul_row shape");
        let rv = self.data(row);
        let value = self
            .data(a)
            .chunks(c)
            .flat_map(|chunk| chunk.iter().zip(rv).map(|(x, y)| x * y))
            .collect();
        self.push(r, c, value, Op::MulRow(a, row))
    }

    /// Scale row `i` of `a` by `col[i]` (`col` is `m×1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(col), (r, 1), "mul_col shape");
        let cv = self.data(col);
        let value = self
            .data(a)
            .chunks(c)
            .zip(cv)
            .flat_map(|(chunk, &s)| chunk.iter().map(move |x| x * s))
            .collect();
        self.push(r, c, value, Op::MulCol(a, col))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let value = self.data(a).iter().map(|x| x * s).collect();
        self.push(r, c, value, Op::Scale(a, s))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let value = self.data(a).iter().map(|&x| f(x)).collect();
        self.push(r, c, value, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(
            a,
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            },
            Op::Sigmoid(a),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { x.exp_m1() }, Op::Elu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    /// Row-wise softmax. Where `mask` is given (row-major, `true` = allowed),
    /// blocked entries get exactly zero weight; every row must allow at
    /// least one entry.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let (r, c) = self.shape(a);
        if let Some(m) = mask {
            assert_eq!(m.len(), r * c, "mask shape");
        }
        let x = self.data(a);
        let mut value = vec![0.0; r * c];
        for i in 0..r {
            let allowed = |j: usize| mask.is_none_or(|m| m[i * c + j]);
            let max = (0..c)
                .filter(|&j| allowed(j))
                .map(|j| x[i * c + j])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(max > f64::NEG_INFINITY, "softmax row {i} fully masked");
            let mut sum = 0.0;
            for j in (0..c).filter(|&j| allowed(j)) {
                let e = (x[i * c + j] - max).exp();
                value[i * c + j] = e;
                sum += e;
            }
            for v in &mut value[i * c..(i + 1) * c] {
                *v /= sum;
            }
        }
        self.push(r, c, value, Op::Softmax(a))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)`.
    pub fn normalize_rows(&mut self, a: Var, eps: f64) -> Var {
        let (r, c) = self.shape(a);
        let x = self.data(a);
        let mut value = Vec::with_capacity(r * c);
        let mut rstd = Vec::with_capacity(r);
        for row in x.chunks(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + eps).sqrt();
            value.extend(row.iter().map(|v| (v - mean) * s));
            rstd.push(s);
        }
        self.push(r, c, value, Op::Normalize(a, rstd))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start + width <= c, "slice_cols out of range");
        let value = self
            .data(a)
            .chunks(c)
            .flat_map(|row| row[start..start + width].iter().copied())
            .collect();
        self.push(r, width, value, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start + len <= r, "slice_rows out of range");
        let value = self.data(a)[start * c..(start + len) * c].to_vec();
        self.push(len, c, value, Op::SliceRows(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let r = self.rows(parts[0]);
        assert!(parts.iter().all(|&p| self.rows(p) == r), "concat_cols rows");
        let c: usize = parts.iter().map(|&p| self.cols(p)).sum();
        let mut value = Vec::with_capacity(r * c);
        for i in 0..r {
            for &p in parts {
                let pc = self.cols(p);
                value.extend_from_slice(&self.data(p)[i * pc..(i + 1) * pc]);
            }
        }
        self.push(r, c, value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let c = self.cols(parts[0]);
        assert!(parts.iter().all(|&p| self.cols(p) == c), "concat_rows cols");
        let mut value = Vec::new();
        for &p in parts {
            value.extend_from_slice(self.data(p));
        }
        let r = value.len() / c.max(1);
        self.push(r, c, value, Op::ConcatRows(parts.to_vec()))
    }

    /// Rows of `a` picked by `indices` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let (r, c) = self.shape(a);
        let mut value = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            assert!(i < r, "gather index out of range");
            value.extend_from_slice(&self.data(a)[i * c..(i + 1) * c]);
        }
        self.push(indices.len(), c, value, Op::GatherRows(a, indices.to_vec()))
    }

    /// Same row-major data under a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        assert_eq!(rows * cols, self.data(a).len(), "reshape size");
        let value = self.data(a).to_vec();
        self.push(rows, cols, value, Op::Reshape(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let x = self.data(a);
        let mut value = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                value[j * r + i] = x[i * c + j];
            }
        }
        self.push(c, r, value, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.data(a).len() as f64;
        let s = self.data(a).iter().sum::<f64>() / n;
        self.push(1, 1, vec![s], Op::MeanAll(a))
    }

    /// Inverted dropout: zero entries with probability `rate`, scale the rest
    /// by `1 / (1 - rate)`. Identity on an evaluation tape.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        let Some(rng) = self.dropout_rng.as_mut() else {
            return a;
        };
        if rate <= 0.0 {
            return a;
        }
        let (r, c) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let m = self.push(r, c, mask, Op::Leaf);
        self.mul(a, m)
    }

    /// Backpropagate from the scalar `loss` and add parameter gradients
    /// into `store`.
    pub fn backward(&mut self, loss: Var, store: &mut ParameterStore) {
        assert_eq!(self.shape(loss), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        self.visited = 0;

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.visited += 1;
            let node = &self.nodes[i];
            let (rows, cols) = (node.rows, node.cols);
            let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
                let n = &self.nodes[v.0];
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n.rows * n.cols]);
                f(slot);
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => add_into(store.grad_mut(*id).data_mut(), &g),
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                    let n = cols;
                    let da = matmul_t(&g, &self.nodes[b.0].value, m, n, k);
                    let db = matmul_tn(&self.nodes[a.0].value, &g, m, k, n);
                    acc(*a, &|s| add_into(s, &da));
                    acc(*b, &|s| add_into(s, &db));
                }
                Op::MatMulT(a, b) => {
                    let (m, k) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                    let n = cols;
                    // da = g (m×n) · b (n×k); db = gᵀ (n×m) · a (m×k)
                    let da = matmul(&g, &self.nodes[b.0].value, m, n, k);
                    let db = matmul_tn(&g, &self.nodes[a.0].value, m, n, k);
                    acc(*a, &|s| add_into(s, &da));
                    acc(*b, &|s| add_into(s, &db));
                }
                Op::Add(a, b) => {
                    acc(*a, &|s| add_into(s, &g));
                    acc(*b, &|s| add_into(s, &g));
                }
                Op::Sub(a, b) => {
                    acc(*a, &|s| add_into(s, &g));
                    acc(*b, &|s| {
                        for (d, x) in s.iter_mut().zip(&g) {
                            *d -= x;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    acc(*a, &|s| {
                        for ((d, x), y) in s.iter_mut().zip(&g).zip(bv) {
                            *d += x * y;
                        }
                    });
                    acc(*b, &|s| {
                        for ((d, x), y) in s.iter_mut().zip(&g).zip(av) {
                            *d += x * y;
                        }
                    });
                }
                Op::AddRow(a, row) => {
                    acc(*a, &|s| add_into(s, &g));
                    acc(*row, &|s| {
                        for chunk in g.chunks(cols) {
                            add_into(s, chunk);
                        }
                    });
                }
                Op::MulRow(a, row) => {
                    let (av, rv) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
                    acc(*a, &|s| {
                        for (r, chunk) in g.chunks(cols).enumerate() {
                            for (c, x) in chunk.iter().enumerate() {
                                s[r * cols + c] += x * rv[c];
                            }
                        }
                    });
                    acc(*row, &|s| {
                        for (r, chunk) in g.chunks(cols).enumerate() {
                            for (c, x) in chunk.iter().enumerate() {
                                s[c] += x * av[r * cols + c];
                            }
                        }
                    });
                }
                Op::MulCol(a, col) => {
                    let (av, cv) = (&self.nodes[a.0].value, &self.nodes[col.0].value);
                    acc(*a, &|s| {
                        for (r, chunk) in g.chunks(cols).enumerate() {
                            for (c, x) in chunk.iter().enumerate() {
                                s[r * cols + c] += x * cv[r];
                            }
                        }
                    });
                    acc(*col, &|s| {
                        for (r, chunk) in g.chunks(cols).enumerate() {
                            s[r] += chunk
                                .iter()
                                .zip(&av[r * cols..(r + 1) * cols])
                                .map(|(x, y)| x * y)
                                .sum::<f64>();
                        }
                    });
                }
                Op::Scale(a, k) => acc(*a, &|s| {
                    for (d, x) in s.iter_mut().zip(&g) {
                        *d += k * x;
                    }
                }),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(*a, &|s| {
                        for ((d, x), y) in s.iter_mut().zip(&g).zip(y) {
                            *d += x * y * (1.0 - y);
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(*a, &|s| {
                        for ((d, x), y) in s.iter_mut().zip(&g).zip(y) {
                            *d += x * (1.0 - y * y);
                        }
                    });
                }
                Op::Elu(a) => {
                    let (xin, y) = (&self.nodes[a.0].value, &node.value);
                    acc(*a, &|s| {
                        for (((d, x), xi), y) in s.iter_mut().zip(&g).zip(xin).zip(y) {
                            *d += if *xi > 0.0 { *x } else { x * (y + 1.0) };
                        }
                    });
                }
                Op::Square(a) => {
                    let xin = &self.nodes[a.0].value;
                    acc(*a, &|s| {
                        for ((d, x), xi) in s.iter_mut().zip(&g).zip(xin) {
                            *d += 2.0 * xi * x;
                        }
                    });
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    acc(*a, &|s| {
                        for r in 0..rows {
                            let yr = &y[r * cols..(r + 1) * cols];
                            let gr = &g[r * cols..(r + 1) * cols];
                            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            for c in 0..cols {
                                s[r * cols + c] += yr[c] * (gr[c] - dot);
                            }
                        }
                    });
                }
                Op::Normalize(a, rstd) => {
                    let y = &node.value;
                    acc(*a, &|s| {
                        let n = cols as f64;
                        for r in 0..rows {
                            let yr = &y[r * cols..(r + 1) * cols];
                            let gr = &g[r * cols..(r + 1) * cols];
                            let mean_g = gr.iter().sum::<f64>() / n;
                            let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                            for c in 0..cols {
                                s[r * cols + c] += rstd[r] * (gr[c] - mean_g - yr[c] * mean_gy);
                            }
                        }
                    });
                }
                Op::SliceCols(a, start) => {
                    let pc = self.nodes[a.0].cols;
                    acc(*a, &|s| {
                        for (r, chunk) in g.chunks(cols).enumerate() {
                            add_into(&mut s[r * pc + start..r * pc + start + cols], chunk);
                        }
                    });
                }
                Op::SliceRows(a, start) => {
                    acc(*a, &|s| add_into(&mut s[start * cols..(start + rows) * cols], &g));
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.nodes[p.0].cols;
                        acc(p, &|s| {
                            for r in 0..rows {
                                add_into(
                                    &mut s[r * pc..(r + 1) * pc],
                                    &g[r * cols + offset..r * cols + offset + pc],
                                );
                            }
                        });
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p.0].value.len();
                        acc(p, &|s| add_into(s, &g[offset..offset + len]));
                        offset += len;
                    }
                }
                Op::GatherRows(a, indices) => acc(*a, &|s| {
                    for (k, &i) in indices.iter().enumerate() {
                        add_into(&mut s[i * cols..(i + 1) * cols], &g[k * cols..(k + 1) * cols]);
                    }
                }),
                Op::Reshape(a) => acc(*a, &|s| add_into(s, &g)),
                Op::Transpose(a) => acc(*a, &|s| {
                    // g is rows x cols; the input is cols x rows.
                    for i in 0..rows {
                        for j in 0..cols {
                            s[j * rows + i] += g[i * cols + j];
                        }
                    }
                }),
                Op::SumAll(a) => acc(*a, &|s| {
                    for d in s.iter_mut() {
                        *d += g[0];
                    }
                }),
                Op::MeanAll(a) => acc(*a, &|s| {
                    let n = s.len() as f64;
                    for d in s.iter_mut() {
                        *d += g[0] / n;
                    }
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let mut store = ParameterStore::new(0);
        let x = store.insert("x", Tensor::scalar(3.0)).unwrap();
        let mut tape = Tape::new();
        let xv = tape.param(&store, x);
        let y = tape.mul(xv, xv);
        tape.backward(y, &mut store);
        assert_eq!(tape.scalar(y), 9.0);
        assert_eq!(store.grad(x).data(), &[6.0]);
    }

    #[test]
    fn backward_visits_each_reachable_node_once() {
        let mut store = ParameterStore::new(0);
        let x = store
            .insert("x", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        let mut tape = Tape::new();
        let xv = tape.param(&store, x);
        let a = tape.tanh(xv);
        let b = tape.mul(a, xv);
        let c = tape.add(b, a);
        let s = tape.sum(c);
        tape.backward(s, &mut store);
        assert_eq!(tape.visited(), tape.len());
    }

    #[test]
    fn transpose_gradient_routes_back() {
        let mut store = ParameterStore::new(0);
        let x = store
            .insert("x", Tensor::matrix(2, 3, (0..6).map(f64::from).collect()))
            .unwrap();
        let mut tape = Tape::new();
        let xv = tape.param(&store, x);
        let t = tape.transpose(xv);
        assert_eq!(tape.data(t), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        let w = tape.constant_matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let p = tape.mul(t, w);
        let s = tape.sum(p);
        tape.backward(s, &mut store);
        // d/dx[i][j] = w[j][i]
        assert_eq!(store.grad(x).data(), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn masked_softmax_zeroes_blocked_entries() {
        let mut tape = Tape::new();
        let x = tape.constant_matrix(2, 3, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let mask = [true, false, false, true, true, false];
        let y = tape.softmax(x, Some(&mask));
        let v = tape.data(y);
        assert_eq!(v[0], 1.0);
        assert_eq!(&v[1..3], &[0.0, 0.0]);
        assert_eq!(v[5], 0.0);
        assert!((v[3] + v[4] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dropout_is_identity_when_evaluating() {
        let mut tape = Tape::new();
        let x = tape.constant_matrix(1, 4, vec![1.0; 4]);
        assert_eq!(tape.dropout(x, 0.5), x);
        let mut train = Tape::training(1);
        let x = train.constant_matrix(1, 1000, vec![1.0; 1000]);
        let y = train.dropout(x, 0.5);
        let zeros = train.data(y).iter().filter(|&&v| v == 0.0).count();
        assert!(zeros > 400 && zeros < 600);
        assert!(train.data(y).iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
