//! ARIMA(p, d, q) by conditional least squares.
//!
//! Start values come from a Hannan-Rissanen regression (long AR residuals
//! stand in for the innovations); Gauss-Newton with step halving then
//! minimizes the conditional sum of squares, with pre-sample innovations
//! set to zero. The MA part is kept invertible throughout; otherwise the
//! residual recursion diverges and the sum of squares is meaningless.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::ArimaConfig;
use crate::ModelError;

const MAX_ITER: usize = 200;
const REL_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-9;
/// Inverse MA roots must stay strictly inside this radius.
const MAX_MA_RADIUS: f64 = 0.999;
/// Where non-invertible start values are pulled back to.
const START_MA_RADIUS: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    /// Constant of the differenced series' equation.
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// Mean squared conditional residual.
    pub sigma2: f64,
    pub iterations: usize,
}

/// Gauss-Newton with step halving from `beta`. Returns the coefficients,
/// their sum of squares and the iteration count, or `None` without
/// convergence.
fn gauss_newton(w: &[f64], p: usize, q: usize, mut beta: Vec<f64>) -> Option<(Vec<f64>, f64, usize)> {
    let mut e = residuals(w, p, q, &beta);
    let mut current = sse(&e, p);
    if !current.is_finite() {
        return None;
    }
    let np = beta.len();
    let rows = w.len() - p;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        // Jacobian of e_t with respect to beta, by the same recursion.
        let mut jac = vec![vec![0.0; np]; w.len()];
        for t in p..w.len() {
            let mut row = vec![0.0; np];
            row[0] = -1.0;
            for i in 0..p {
                row[1 + i] = -w[t - 1 - i];
            }
            for j in 0..q.min(t) {
                row[1 + p + j] -= e[t - 1 - j];
                if t - 1 - j >= p {
                    for (r, prev) in row.iter_mut().zip(&jac[t - 1 - j]) {
                        *r -= beta[1 + p + j] * prev;
                    }
                }
            }
            jac[t] = row;
        }
        let jm = DMatrix::from_fn(rows, np, |r, c| jac[p + r][c]);
        let ev = DVector::from_iterator(rows, e[p..].iter().map(|v| -v));
        let delta = least_squares(&jm, &ev)?;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + step * d).collect();
            if !invertible(&trial[1 + p..]) {
                step *= 0.5;
                continue;
            }
            let te = residuals(w, p, q, &trial);
            let ts = sse(&te, p);
            if ts.is_finite() && ts <= current {
                accepted = Some((trial, te, ts));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, te, ts)) = accepted else {
            converged = true;
            break;
        };
        let max_step = delta.iter().map(|d| (d * step).abs()).fold(0.0, f64::max);
        let improvement = (current - ts) / current.max(f64::MIN_POSITIVE);
        beta = trial;
        e = te;
        current = ts;
        if improvement < REL_TOL || max_step < STEP_TOL {
            converged = true;
            break;
        }
    }
    converged.then_some((beta, current, iterations))
}

/// Shortest series `arima_fit` accepts for `cfg`.
pub fn min_length(cfg: &ArimaConfig) -> usize {
    cfg.d + cfg.p.max(cfg.q) + cfg.p + cfg.q + 2
}

pub fn difference(y: &[f64], d: usize) -> Vec<f64> {
    let mut w = y.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    w
}

/// Coefficient vector layout: `[c, phi_1..phi_p, theta_1..theta_q]`.
fn residuals(w: &[f64], p: usize, q: usize, beta: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let mut pred = beta[0];
        for i in 0..p {
            pred += beta[1 + i] * w[t - 1 - i];
        }
        for j in 0..q.min(t) {
            pred += beta[1 + p + j] * e[t - 1 - j];
        }
        e[t] = w[t] - pred;
    }
    e
}

fn sse(e: &[f64], p: usize) -> f64 {
    e[p..].iter().map(|v| v * v).sum()
}

/// Minimum-norm least squares `argmin |X b - y|`; collinear designs (a
/// constant differenced series, say) are handled by the SVD cutoff.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = x.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-12 * x.nrows().max(x.ncols()) as f64;
    svd.solve(y, cutoff)
        .ok()
        .filter(|b| b.iter().all(|v| v.is_finite()))
}

/// Regress `w_t` on a constant, `lags` own lags and `e_lags` lags of `e`,
/// for `t >= start`.
fn lag_regression(w: &[f64], e: &[f64], lags: usize, e_lags: usize, start: usize) -> Option<Vec<f64>> {
    let rows = w.len().checked_sub(start)?;
    let cols = 1 + lags + e_lags;
    if rows <= cols {
        return None;
    }
    let x = DMatrix::from_fn(rows, cols, |r, c| {
        let t = start + r;
        match c {
            0 => 1.0,
            c if c <= lags => w[t - c],
            c => e[t - (c - lags)],
        }
    });
    let y = DVector::from_iterator(rows, w[start..].iter().copied());
    least_squares(&x, &y).map(|b| b.iter().copied().collect())
}

/// Largest modulus among the inverse roots of `1 + theta_1 z + ... + theta_q z^q`,
/// i.e. the spectral radius of its companion matrix.
fn ma_root_radius(theta: &[f64]) -> f64 {
    let q = theta.len();
    if q == 0 {
        return 0.0;
    }
    let c = DMatrix::from_fn(q, q, |r, k| {
        if r == 0 {
            -theta[k]
        } else if r == k + 1 {
            1.0
        } else {
            0.0
        }
    });
    c.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// The residual recursion is stable only for an invertible MA part.
fn invertible(theta: &[f64]) -> bool {
    let r = ma_root_radius(theta);
    r.is_finite() && r < MAX_MA_RADIUS
}

/// Scales `theta_j` by `c^j`, which scales every inverse root by `c`.
fn shrink_ma(theta: &mut [f64]) {
    let r = ma_root_radius(theta);
    if !(r.is_finite() && r < MAX_MA_RADIUS) {
        let c = if r.is_finite() { START_MA_RADIUS / r } else { 0.0 };
        let mut f = 1.0;
        for t in theta.iter_mut() {
            f *= c;
            *t *= f;
        }
    }
}

/// Gauss-Newton is run from each of these and the lowest sum of squares
/// wins. Near an MA unit root the surface is badly conditioned and a
/// single start can stall far from the optimum.
fn start_candidates(w: &[f64], p: usize, q: usize) -> Vec<Vec<f64>> {
    let hr = start_values(w, p, q);
    if q == 0 {
        return vec![hr];
    }
    let mut damped = hr.clone();
    let r = ma_root_radius(&damped[1 + p..]);
    if r > 0.5 {
        let c = 0.5 / r;
        let mut f = 1.0;
        for t in damped[1 + p..].iter_mut() {
            f *= c;
            *t *= f;
        }
    }
    let mut ar_only = start_values(w, p, 0);
    ar_only.resize(1 + p + q, 0.0);
    vec![hr, damped, ar_only]
}

fn start_values(w: &[f64], p: usize, q: usize) -> Vec<f64> {
    let n = w.len();
    let mut beta = vec![0.0; 1 + p + q];
    beta[0] = w.iter().sum::<f64>() / n as f64;
    if q == 0 {
        if let Some(b) = lag_regression(w, &[], p, 0, p) {
            beta = b;
        }
        return beta;
    }
    let m = ((n as f64).ln().powi(2) as usize)
        .max(p + q + 1)
        .min(n / 4)
        .max(1);
    let Some(long_ar) = lag_regression(w, &[], m, 0, m) else {
        return beta;
    };
    let mut e = vec![0.0; n];
    for t in m..n {
        let pred = long_ar[0] + (1..=m).map(|i| long_ar[i] * w[t - i]).sum::<f64>();
        e[t] = w[t] - pred;
    }
    if let Some(b) = lag_regression(w, &e, p, q, m + q.max(p)) {
        beta = b;
    }
    shrink_ma(&mut beta[1 + p..]);
    beta
}

pub fn arima_fit(y: &[f64], cfg: &ArimaConfig) -> Result<ArimaFit, ModelError> {
    cfg.validate()?;
    let needed = min_length(cfg);
    if y.len() < needed {
        return Err(ModelError::SeriesTooShort { needed, got: y.len() });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::config(
            "series",
            format!("value at position {i} is not finite"),
        ));
    }
    let (p, q) = (cfg.p, cfg.q);
    let w = difference(y, cfg.d);
    let rows = w.len() - p;
    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    let mut iterations = 0;
    for beta in start_candidates(&w, p, q) {
        match gauss_newton(&w, p, q, beta) {
            Some(fit) => {
                iterations = iterations.max(fit.2);
                if best.as_ref().is_none_or(|b| fit.1 < b.1) {
                    best = Some(fit);
                }
            }
            None => iterations = MAX_ITER,
        }
    }
    let Some((beta, current, iterations)) = best.map(|(b, s, _)| (b, s, iterations)) else {
        return Err(ModelError::NonConvergence { iterations });
    };
    Ok(ArimaFit {
        p,
        d: cfg.d,
        q,
        intercept: beta[0],
        ar: beta[1..1 + p].to_vec(),
        ma: beta[1 + p..].to_vec(),
        sigma2: current / rows as f64,
        iterations,
    })
}

impl ArimaFit {
    fn beta(&self) -> Vec<f64> {
        let mut b = vec![self.intercept];
        b.extend(&self.ar);
        b.extend(&self.ma);
        b
    }

    /// Extend `history` by `steps` values. Innovations over the history are
    /// recomputed with the fitted coefficients; future ones are zero.
    pub fn forecast(&self, history: &[f64], steps: usize) -> Result<Vec<f64>, ModelError> {
        let needed = self.d + self.p + 1;
        if history.len() < needed {
            return Err(ModelError::SeriesTooShort {
                needed,
                got: history.len(),
            });
        }
        let mut w = difference(history, self.d);
        let mut e = residuals(&w, self.p, self.q, &self.beta());
        // Last value of each differencing level, for integration.
        let mut lasts: Vec<f64> = (0..self.d)
            .map(|j| *difference(history, j).last().expect("non-empty history"))
            .collect();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let t = w.len();
            let mut next = self.intercept;
            for (i, phi) in self.ar.iter().enumerate() {
                next += phi * w[t - 1 - i];
            }
            for (j, theta) in self.ma.iter().enumerate() {
                if j < t {
                    next += theta * e[t - 1 - j];
                }
            }
            w.push(next);
            e.push(0.0);
            let mut level = next;
            for last in lasts.iter_mut().rev() {
                level += *last;
                *last = level;
            }
            out.push(level);
        }
        Ok(out)
    }
}
