//! Seeded random search over discrete hyperparameter lists.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::WindowKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("search budget must be at least 1")]
    ZeroBudget,
    #[error("hyperparameter `{0}` has no candidate values")]
    EmptyList(String),
    #[error("search space has no hyperparameters")]
    EmptySpace,
}

/// Non-fatal search conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchWarning {
    /// Budget is larger than the number of distinct configurations; repeats were allowed.
    BudgetExceedsSpace { budget: usize, distinct: usize },
}

/// Named candidate lists, a trial budget and a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: BTreeMap<String, Vec<f64>>,
    pub budget: usize,
    pub seed: u64,
}

pub type Sample = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub config: Sample,
    /// Validation MAPE; `None` when training or evaluation failed.
    pub score: Option<f64>,
    pub error: Option<String>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Trials sorted by ascending score, failures last, ties by index.
    pub ranked: Vec<Trial>,
    pub warnings: Vec<SearchWarning>,
}

impl SearchOutcome {
    pub fn best(&self) -> Option<&Trial> {
        self.ranked.first().filter(|t| t.score.is_some())
    }
}

/// SplitMix64 finalizer; used to derive independent per-trial seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SearchSpace {
    /// TFT candidate lists plus the input-window sizes for `kind`.
    pub fn tft_default(kind: WindowKind, budget: usize, seed: u64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("attention_heads".into(), vec![1.0, 4.0]);
        params.insert("hidden_size".into(), vec![16.0, 32.0, 64.0]);
        params.insert("dropout".into(), vec![0.1, 0.3]);
        params.insert("batch_size".into(), vec![32.0, 128.0]);
        params.insert("lstm_layers".into(), vec![1.0, 2.0, 4.0]);
        params.insert("input_window".into(), input_windows(kind));
        Self { params, budget, seed }
    }

    /// LSTM candidate lists plus the input-window sizes for `kind`.
    pub fn lstm_default(kind: WindowKind, budget: usize, seed: u64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("batch_size".into(), vec![50.0, 10.0, 120.0, 150.0]);
        params.insert("learning_rate".into(), vec![0.001, 0.01, 0.1]);
        params.insert("dropout".into(), vec![0.1, 0.2, 0.3]);
        params.insert("num_layers".into(), vec![1.0, 2.0, 4.0]);
        params.insert("hidden_size".into(), vec![64.0, 128.0, 248.0, 496.0]);
        params.insert("input_window".into(), input_windows(kind));
        Self { params, budget, seed }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.budget == 0 {
            return Err(SearchError::ZeroBudget);
        }
        if self.params.is_empty() {
            return Err(SearchError::EmptySpace);
        }
        if let Some((name, _)) = self.params.iter().find(|(_, v)| v.is_empty()) {
            return Err(SearchError::EmptyList(name.clone()));
        }
        Ok(())
    }

    /// Number of distinct configurations (saturating).
    pub fn distinct(&self) -> usize {
        self.params
            .values()
            .fold(1usize, |acc, v| acc.saturating_mul(v.len()))
    }

    /// Draw `budget` configurations; duplicates are rejected while the
    /// space still has unseen configurations.
    pub fn sample(&self) -> Result<(Vec<Sample>, Vec<SearchWarning>), SearchError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let distinct = self.distinct();
        let mut warnings = Vec::new();
        if self.budget > distinct {
            warnings.push(SearchWarning::BudgetExceedsSpace {
                budget: self.budget,
                distinct,
            });
        }
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut samples = Vec::with_capacity(self.budget);
        while samples.len() < self.budget {
            let picks: Vec<usize> = self.params.values().map(|v| rng.gen_range(0..v.len())).collect();
            if seen.len() < distinct && !seen.insert(picks.clone()) {
                continue;
            }
            samples.push(
                self.params
                    .iter()
                    .zip(&picks)
                    .map(|((name, values), &i)| (name.clone(), values[i]))
                    .collect(),
            );
        }
        Ok((samples, warnings))
    }
}

fn input_windows(kind: WindowKind) -> Vec<f64> {
    match kind {
        WindowKind::Day => vec![24.0, 48.0, 72.0, 168.0, 336.0, 672.0],
        WindowKind::Week => vec![168.0, 336.0, 504.0, 672.0],
    }
}

/// Train and score every sampled configuration, `threads` at a time, and
/// rank them by score. Each trial gets `derive_seed(space.seed, index)`.
pub fn random_search<M, E: std::fmt::Display>(
    space: &SearchSpace,
    threads: usize,
    train_fn: impl Fn(&Sample, u64) -> Result<M, E> + Sync,
    eval_fn: impl Fn(&M) -> Result<f64, E> + Sync,
) -> Result<SearchOutcome, SearchError> {
    let (samples, warnings) = space.sample()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Trial>>> = Mutex::new(vec![None; samples.len()]);
    let run = |index: usize| {
        let seed = derive_seed(space.seed, index as u64);
        let config = samples[index].clone();
        let started = Instant::now();
        let outcome = train_fn(&config, seed).and_then(|m| eval_fn(&m));
        let (score, error) = match outcome {
            Ok(s) if s.is_finite() => (Some(s), None),
            Ok(s) => (None, Some(format!("non-finite score {s}"))),
            Err(e) => (None, Some(e.to_string())),
        };
        Trial {
            index,
            seed,
            config,
            score,
            error,
            runtime_secs: started.elapsed().as_secs_f64(),
        }
    };
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(samples.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= samples.len() {
                    break;
                }
                let trial = run(i);
                results.lock().expect("no poisoned trial")[i] = Some(trial);
            });
        }
    });
    let mut ranked: Vec<Trial> = results
        .into_inner()
        .expect("no poisoned trial")
        .into_iter()
        .map(|t| t.expect("every trial ran"))
        .collect();
    ranked.sort_by(|a, b| match (a.score, b.score) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.index.cmp(&b.index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    Ok(SearchOutcome { ranked, warnings })
}
