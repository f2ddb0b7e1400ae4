//! Normalized training data and time-major batch assembly.

use gridcast_core::preprocess::{CovariateFrame, Normalizer, Schema};
use gridcast_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Per-series normalizers, fitted on the training rows of that series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesScaling {
    pub id: String,
    pub past: Normalizer,
    pub future: Normalizer,
}

impl SeriesScaling {
    pub fn fit(frame: &CovariateFrame, train_len: usize) -> Self {
        Self {
            id: frame.series_id.clone(),
            past: Normalizer::fit(&frame.past_known.slice_rows(0, train_len)),
            future: Normalizer::fit(&frame.future_known.slice_rows(0, train_len)),
        }
    }

    pub fn target_to_unit(&self, v: f64) -> f64 {
        self.past.apply_value(0, v)
    }

    pub fn target_from_unit(&self, v: f64) -> f64 {
        self.past.invert_value(0, v)
    }
}

/// One series in normalized units.
#[derive(Debug, Clone)]
pub(crate) struct SeriesData {
    pub past: Matrix,
    pub future: Matrix,
    pub static_ids: Vec<usize>,
}

impl SeriesData {
    pub fn new(scaling: &SeriesScaling, past: &Matrix, future: &Matrix, static_ids: &[usize]) -> Self {
        Self {
            past: scaling.past.apply(past),
            future: scaling.future.apply(future),
            static_ids: static_ids.to_vec(),
        }
    }
}

/// A forecast origin inside one series: inputs are the `k` rows before
/// `origin`, targets the `h` rows from `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Origin {
    pub series: usize,
    pub origin: usize,
}

/// Time-major batch: row `t * batch + b` holds step `t` of sample `b`.
#[derive(Debug, Clone)]
pub(crate) struct Batch {
    pub batch: usize,
    pub k: usize,
    pub h: usize,
    /// `(k * batch) x P`
    pub past: Vec<f64>,
    pub n_past: usize,
    /// `((k + h) * batch) x F`
    pub known: Vec<f64>,
    pub n_known: usize,
    /// One id list per static column, each of length `batch`.
    pub statics: Vec<Vec<usize>>,
    /// `batch x h`, sample-major.
    pub target: Vec<f64>,
}

impl Batch {
    /// Targets are filled only when the origin has `h` rows of truth.
    pub fn assemble(data: &[SeriesData], origins: &[Origin], k: usize, h: usize) -> Self {
        let batch = origins.len();
        let n_past = data[0].past.cols();
        let n_known = data[0].future.cols();
        let n_static = data[0].static_ids.len();
        let mut past = vec![0.0; k * batch * n_past];
        let mut known = vec![0.0; (k + h) * batch * n_known];
        let mut target = vec![0.0; batch * h];
        let mut statics = vec![vec![0; batch]; n_static];
        for (b, o) in origins.iter().enumerate() {
            let s = &data[o.series];
            for t in 0..k {
                let row = s.past.row(o.origin - k + t);
                past[(t * batch + b) * n_past..(t * batch + b + 1) * n_past].copy_from_slice(row);
            }
            for t in 0..k + h {
                let row = s.future.row(o.origin - k + t);
                known[(t * batch + b) * n_known..(t * batch + b + 1) * n_known].copy_from_slice(row);
            }
            for t in 0..h {
                if o.origin + t < s.past.rows() {
                    target[b * h + t] = s.past.get(o.origin + t, 0);
                }
            }
            for (c, ids) in statics.iter_mut().enumerate() {
                ids[b] = s.static_ids[c];
            }
        }
        Self {
            batch,
            k,
            h,
            past,
            n_past,
            known,
            n_known,
            statics,
            target,
        }
    }
}

pub(crate) fn check_schema(expected: &Schema, found: &Schema) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::SchemaMismatch {
            expected: Box::new(expected.clone()),
            found: Box::new(found.clone()),
        });
    }
    Ok(())
}

/// Training and validation origins for every series. The last tenth of
/// each training span is held out for early stopping.
pub(crate) fn split_origins(
    train_lens: &[usize],
    k: usize,
    h: usize,
    stride: usize,
) -> (Vec<Origin>, Vec<Origin>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (series, &n) in train_lens.iter().enumerate() {
        let val_start = n - (n as f64 * 0.1).round() as usize;
        let mut o = k;
        while o + h <= n {
            // Origins whose target straddles the boundary are skipped.
            if o + h <= val_start {
                train.push(Origin { series, origin: o });
            } else if o >= val_start {
                val.push(Origin { series, origin: o });
            }
            o += stride;
        }
    }
    (train, val)
}
