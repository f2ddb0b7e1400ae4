use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub min: f64,
    pub max: f64,
    /// Column was constant (or empty) at fit time and passes through unscaled.
    pub constant: bool,
}

/// Per-feature min-max scaling fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub method: String,
    pub columns: Vec<ColumnScale>,
}

impl Normalizer {
    pub const METHOD: &'static str = "minmax";

    pub fn fit(train: &Matrix) -> Self {
        let columns = (0..train.cols())
            .map(|c| {
                let (min, max) = train
                    .column(c)
                    .into_iter()
                    .filter(|v| v.is_finite())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    });
                if max > min {
                    ColumnScale {
                        min,
                        max,
                        constant: false,
                    }
                } else {
                    ColumnScale {
                        min: if min.is_finite() { min } else { 0.0 },
                        max: if max.is_finite() { max } else { 0.0 },
                        constant: true,
                    }
                }
            })
            .collect();
        Self {
            method: Self::METHOD.to_string(),
            columns,
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn apply_value(&self, column: usize, v: f64) -> f64 {
        let s = &self.columns[column];
        if s.constant {
            v
        } else {
            (v - s.min) / (s.max - s.min)
        }
    }

    pub fn invert_value(&self, column: usize, v: f64) -> f64 {
        let s = &self.columns[column];
        if s.constant {
            v
        } else {
            v * (s.max - s.min) + s.min
        }
    }

    fn map(&self, m: &Matrix, f: impl Fn(usize, f64) -> f64) -> Matrix {
        assert_eq!(m.cols(), self.width(), "normalizer width mismatch");
        let mut out = m.clone();
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                out.set(r, c, f(c, m.get(r, c)));
            }
        }
        out
    }

    pub fn apply(&self, m: &Matrix) -> Matrix {
        self.map(m, |c, v| self.apply_value(c, v))
    }

    pub fn invert(&self, m: &Matrix) -> Matrix {
        self.map(m, |c, v| self.invert_value(c, v))
    }
}
