//! Error metrics, per-window reports, significance testing and
//! hyperparameter search.

mod metrics;
mod report;
mod search;
mod stats;

pub use metrics::{mape, rmse, smape, MetricError};
pub use report::{
    check_same_windows, evaluate_windows, read_scores_csv, EvalError, EvalLevel, EvalReport, MeanStd,
    ReportLabels, ReportSummary, WindowForecast, WindowScore,
};
pub use search::{
    derive_seed, random_search, Sample, SearchError, SearchOutcome, SearchSpace, SearchWarning, Trial,
};
pub use stats::{
    ln_gamma, regularized_incomplete_beta, student_t_two_sided, welch_ttest, SignificanceResult, StatsError,
};
