//! Per-window error reports with mean and sample standard deviation.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{mape, rmse, smape, MetricError};
use crate::timeseries::{EvalWindow, Series, WindowKind};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no evaluation windows")]
    NoWindows,
    #[error("window starting {0}: truth series does not cover the target span")]
    TruthNotCovered(DateTime<Utc>),
    #[error("window starting {start}: {source}")]
    Metric {
        start: DateTime<Utc>,
        #[source]
        source: MetricError,
    },
    #[error("window starting {start}: forecast failed: {message}")]
    Forecast { start: DateTime<Utc>, message: String },
    #[error("window sets differ: {0}")]
    WindowSetMismatch(String),
    #[error("report I/O: {0}")]
    Io(String),
}

/// Where the metric is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalLevel {
    /// Direct grid-level forecast.
    Grid,
    /// Substation forecasts summed to the grid.
    Hierarchical,
    /// Individual substation.
    Substation,
}

impl fmt::Display for EvalLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalLevel::Grid => "grid",
            EvalLevel::Hierarchical => "hierarchical",
            EvalLevel::Substation => "substation",
        })
    }
}

impl FromStr for EvalLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(EvalLevel::Grid),
            "hierarchical" => Ok(EvalLevel::Hierarchical),
            "substation" => Ok(EvalLevel::Substation),
            other => Err(format!("unknown level `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub target_start: DateTime<Utc>,
    pub rmse: f64,
    pub mape: f64,
    pub smape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowForecast {
    pub target_start: DateTime<Utc>,
    pub actual: Vec<f64>,
    pub forecast: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample (n - 1) standard deviation; zero for a single window.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

/// Summary row in the shape of a results table: mean and std per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub model: String,
    pub dataset: String,
    pub level: EvalLevel,
    pub horizon: WindowKind,
    pub windows: usize,
    /// Set when only one window exists and `std` is reported as zero.
    pub single_window: bool,
    pub rmse: MeanStd,
    pub mape: MeanStd,
    pub smape: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: ReportSummary,
    pub scores: Vec<WindowScore>,
    pub forecasts: Vec<WindowForecast>,
}

/// Identifying labels attached to a report.
#[derive(Debug, Clone)]
pub struct ReportLabels {
    pub model: String,
    pub dataset: String,
    pub level: EvalLevel,
}

/// Forecast every window with `forecast`, score it against `truth`, and
/// summarize the per-window metrics.
pub fn evaluate_windows<E: fmt::Display>(
    windows: &[EvalWindow],
    truth: &Series,
    labels: ReportLabels,
    mut forecast: impl FnMut(&EvalWindow) -> Result<Vec<f64>, E>,
) -> Result<EvalReport, EvalError> {
    let first = windows.first().ok_or(EvalError::NoWindows)?;
    let mut scores = Vec::with_capacity(windows.len());
    let mut forecasts = Vec::with_capacity(windows.len());
    for w in windows {
        let start = w.target.start;
        let offset = truth
            .index()
            .position(start)
            .filter(|o| o + w.target.len <= truth.len())
            .ok_or(EvalError::TruthNotCovered(start))?;
        let actual = truth.values()[offset..offset + w.target.len].to_vec();
        let predicted = forecast(w).map_err(|e| EvalError::Forecast {
            start,
            message: e.to_string(),
        })?;
        let metric = |source| EvalError::Metric { start, source };
        scores.push(WindowScore {
            target_start: start,
            rmse: rmse(&actual, &predicted).map_err(metric)?,
            mape: mape(&actual, &predicted).map_err(metric)?,
            smape: smape(&actual, &predicted).map_err(metric)?,
        });
        forecasts.push(WindowForecast {
            target_start: start,
            actual,
            forecast: predicted,
        });
    }
    Ok(EvalReport {
        summary: summarize(&scores, labels, first.kind),
        scores,
        forecasts,
    })
}

fn summarize(scores: &[WindowScore], labels: ReportLabels, horizon: WindowKind) -> ReportSummary {
    let col = |f: fn(&WindowScore) -> f64| scores.iter().map(f).collect::<Vec<_>>();
    ReportSummary {
        model: labels.model,
        dataset: labels.dataset,
        level: labels.level,
        horizon,
        windows: scores.len(),
        single_window: scores.len() == 1,
        rmse: MeanStd::of(&col(|s| s.rmse)),
        mape: MeanStd::of(&col(|s| s.mape)),
        smape: MeanStd::of(&col(|s| s.smape)),
    }
}

impl EvalReport {
    pub fn mape_vector(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.mape).collect()
    }

    /// One row per window: `window_start,rmse,mape,smape`.
    pub fn write_scores_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| EvalError::Io(e.to_string());
        out.write_record(["window_start", "rmse", "mape", "smape"])
            .map_err(io)?;
        for s in &self.scores {
            out.write_record([
                s.target_start.to_rfc3339(),
                format!("{}", s.rmse),
                format!("{}", s.mape),
                format!("{}", s.smape),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| EvalError::Io(e.to_string()))
    }

    /// Actual against forecast per window hour, for plotting.
    pub fn write_forecasts_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| EvalError::Io(e.to_string());
        out.write_record(["window_start", "timestamp", "actual", "forecast"])
            .map_err(io)?;
        for f in &self.forecasts {
            for (h, (a, p)) in f.actual.iter().zip(&f.forecast).enumerate() {
                let ts = f.target_start + chrono::Duration::hours(h as i64);
                out.write_record([
                    f.target_start.to_rfc3339(),
                    ts.to_rfc3339(),
                    format!("{a}"),
                    format!("{p}"),
                ])
                .map_err(io)?;
            }
        }
        out.flush().map_err(|e| EvalError::Io(e.to_string()))
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

/// Read per-window scores written by [`EvalReport::write_scores_csv`].
pub fn read_scores_csv<R: Read>(reader: R) -> Result<Vec<WindowScore>, EvalError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers().map_err(|e| EvalError::Io(e.to_string()))?.clone();
    if headers.iter().ne(["window_start", "rmse", "mape", "smape"]) {
        return Err(EvalError::Io(
            "expected header `window_start,rmse,mape,smape`".into(),
        ));
    }
    let mut scores = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| EvalError::Io(format!("row {row}: {e}")))?;
        if record.len() != 4 {
            return Err(EvalError::Io(format!("row {row}: expected 4 fields")));
        }
        let target_start = DateTime::parse_from_rfc3339(&record[0])
            .map_err(|e| EvalError::Io(format!("row {row}: {e}")))?
            .with_timezone(&Utc);
        let num = |c: usize| {
            record[c]
                .parse::<f64>()
                .map_err(|e| EvalError::Io(format!("row {row}, column {c}: {e}")))
        };
        scores.push(WindowScore {
            target_start,
            rmse: num(1)?,
            mape: num(2)?,
            smape: num(3)?,
        });
    }
    Ok(scores)
}

/// Check that two score lists cover the same windows.
pub fn check_same_windows(a: &[WindowScore], b: &[WindowScore]) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::WindowSetMismatch(format!(
            "{} windows against {}",
            a.len(),
            b.len()
        )));
    }
    if let Some((x, y)) = a.iter().zip(b).find(|(x, y)| x.target_start != y.target_start) {
        return Err(EvalError::WindowSetMismatch(format!(
            "window {} against {}",
            x.target_start, y.target_start
        )));
    }
    Ok(())
}
