//! Cleaning and feature construction.

mod calendar;
mod clean;
mod covariates;
mod normalize;

use chrono::NaiveDate;
use thiserror::Error;

use crate::timeseries::SeriesError;

pub use calendar::{encode_calendar, HolidayCalendar, CALENDAR_COLUMNS};
pub use clean::{
    filter_low_consumption, harmonize_dst, interpolate_flagged, iqr_clean, iqr_threshold, quantile_type7,
    CleaningReport, IQR_FENCE, MIN_MEAN_KWH, MIN_TOTAL_KWH,
};
pub use covariates::{
    assemble_covariates, ColumnDesc, CovariateFrame, Horizon, Level, Schema, WindowInput, CONSUMPTION,
    GRID_NODE_ID, INCIDENCE, TEMPERATURE,
};
pub use normalize::{ColumnScale, Normalizer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("local day {date} has {hours} hours; expected 23, 24 or 25")]
    MalformedDay { date: NaiveDate, hours: usize },
    #[error("series `{id}` has no usable value to interpolate from")]
    AllBad { id: String },
    #[error("series `{id}` has {len} values; at least {min} required")]
    TooShort { id: String, len: usize, min: usize },
    #[error("holiday calendar does not cover {date}")]
    CalendarGap { date: NaiveDate },
    #[error("inputs are not aligned: {0}")]
    IndexMismatch(String),
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

impl PreprocessError {
    fn parse(row: usize, column: impl Into<String>, message: impl Into<String>) -> Self {
        PreprocessError::Parse {
            row,
            column: column.into(),
            message: message.into(),
        }
    }
}
