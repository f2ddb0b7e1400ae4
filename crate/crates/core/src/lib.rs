//! Data layer of the gridcast load-forecasting engine: hourly series,
//! dataset readers, preprocessing, and forecast evaluation.

pub mod eval;
pub mod ingest;
pub mod matrix;
pub mod preprocess;
pub mod timeseries;

pub use matrix::Matrix;
pub use timeseries::{
    aggregate_bottom_up, align, enumerate_eval_windows, rebuild_grid, time_split, EvalWindow,
    HierarchicalSet, HourSpan, HourlyIndex, Quality, Series, SeriesError, SplitSpec, Unit, WindowKind,
};
