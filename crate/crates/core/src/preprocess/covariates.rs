//! Covariate frames grouped by the horizon over which each feature is known.

use std::fmt;
use std::str::FromStr;

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::calendar::{encode_calendar, HolidayCalendar, CALENDAR_COLUMNS};
use super::PreprocessError;
use crate::matrix::Matrix;
use crate::timeseries::{HierarchicalSet, HourlyIndex, Series};

/// When a feature's value is available relative to the forecast origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    /// Known up to the present (consumption, incidence).
    Past,
    /// Known for the forecast horizon (calendar, temperature proxy).
    Future,
    /// Constant per series (grid node id).
    Static,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnDesc {
    pub name: String,
    pub horizon: Horizon,
    /// Number of categories for static categorical columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnDesc>,
}

impl Schema {
    pub fn names(&self, horizon: Horizon) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.horizon == horizon)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn count(&self, horizon: Horizon) -> usize {
        self.columns.iter().filter(|c| c.horizon == horizon).count()
    }

    /// Cardinalities of the static columns, in order.
    pub fn static_cardinalities(&self) -> Vec<usize> {
        self.columns
            .iter()
            .filter(|c| c.horizon == Horizon::Static)
            .map(|c| c.cardinality.unwrap_or(1))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Grid,
    Substation,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Grid => "grid",
            Level::Substation => "substation",
        })
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(Level::Grid),
            "substation" => Ok(Level::Substation),
            other => Err(format!("unknown level `{other}` (expected grid or substation)")),
        }
    }
}

pub const CONSUMPTION: &str = "consumption";
pub const INCIDENCE: &str = "incidence";
pub const TEMPERATURE: &str = "temperature";
pub const GRID_NODE_ID: &str = "grid_node_id";

/// Features of one target series. Column 0 of `past_known` is the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateFrame {
    pub series_id: String,
    pub index: HourlyIndex,
    pub past_known: Matrix,
    pub future_known: Matrix,
    pub static_ids: Vec<usize>,
    pub schema: Schema,
}

/// Model input for one forecast origin, in raw (unnormalized) units.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowInput {
    /// Position of the series in the training set (selects its normalizer).
    pub series: usize,
    /// `k` rows of past-known features ending at the origin.
    pub past_known: Matrix,
    /// `k + H` rows of future-known features: the input span then the horizon.
    pub known: Matrix,
    pub static_ids: Vec<usize>,
}

impl CovariateFrame {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn target(&self) -> Vec<f64> {
        self.past_known.column(0)
    }

    /// Window whose horizon starts at row `origin`; `None` if it does not fit.
    pub fn window(&self, series: usize, origin: usize, k: usize, horizon: usize) -> Option<WindowInput> {
        if origin < k || origin + horizon > self.len() {
            return None;
        }
        Some(WindowInput {
            series,
            past_known: self.past_known.slice_rows(origin - k, k),
            known: self.future_known.slice_rows(origin - k, k + horizon),
            static_ids: self.static_ids.clone(),
        })
    }

    /// Rows `start..start + len` of every matrix.
    pub fn slice(&self, start: usize, len: usize) -> CovariateFrame {
        CovariateFrame {
            series_id: self.series_id.clone(),
            index: self.index.slice(start, len),
            past_known: self.past_known.slice_rows(start, len),
            future_known: self.future_known.slice_rows(start, len),
            static_ids: self.static_ids.clone(),
            schema: self.schema.clone(),
        }
    }
}

fn cover(series: &Series, index: &HourlyIndex, what: &str) -> Result<Vec<f64>, PreprocessError> {
    series
        .restrict(index)
        .map(|s| s.values().to_vec())
        .ok_or_else(|| {
            PreprocessError::IndexMismatch(format!(
                "{what} spans {} hours from {}, targets need {} hours from {}",
                series.len(),
                series.index().start(),
                index.len(),
                index.start()
            ))
        })
}

/// Build one frame per target series: the grid at `Level::Grid`, every
/// substation (with its node id as static feature) at `Level::Substation`.
pub fn assemble_covariates(
    set: &HierarchicalSet,
    temperature: &Series,
    incidence: Option<&Series>,
    holidays: &HolidayCalendar,
    zone: Tz,
    level: Level,
) -> Result<Vec<CovariateFrame>, PreprocessError> {
    let index = *set.index();
    for s in &set.substations {
        if s.index() != &index {
            return Err(PreprocessError::IndexMismatch(format!(
                "substation `{}` is not aligned with the grid",
                s.id()
            )));
        }
    }
    let temperature = cover(temperature, &index, "temperature")?;
    let incidence = incidence.map(|s| cover(s, &index, "incidence")).transpose()?;
    let calendar = encode_calendar(&index, zone, holidays)?;

    let mut schema = Schema::default();
    let mut push = |name: &str, horizon, cardinality| {
        schema.columns.push(ColumnDesc {
            name: name.to_string(),
            horizon,
            cardinality,
        })
    };
    push(CONSUMPTION, Horizon::Past, None);
    if incidence.is_some() {
        push(INCIDENCE, Horizon::Past, None);
    }
    for name in CALENDAR_COLUMNS {
        push(name, Horizon::Future, None);
    }
    push(TEMPERATURE, Horizon::Future, None);
    if level == Level::Substation {
        push(GRID_NODE_ID, Horizon::Static, Some(set.substations.len()));
    }

    let future_known = calendar.hstack(&Matrix::from_columns(&[&temperature]));
    let frame = |series: &Series, static_ids: Vec<usize>| {
        let mut past: Vec<&[f64]> = vec![series.values()];
        if let Some(inc) = &incidence {
            past.push(inc);
        }
        CovariateFrame {
            series_id: series.id().to_string(),
            index,
            past_known: Matrix::from_columns(&past),
            future_known: future_known.clone(),
            static_ids,
            schema: schema.clone(),
        }
    };
    Ok(match level {
        Level::Grid => vec![frame(&set.grid, Vec::new())],
        Level::Substation => set
            .substations
            .iter()
            .enumerate()
            .map(|(i, s)| frame(s, vec![i]))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::Unit;
    use chrono::{TimeZone, Utc};

    fn fixture() -> (HierarchicalSet, Series, Series) {
        let index = HourlyIndex::new(Utc.with_ymd_and_hms(2021, 1, 4, 0, 0, 0).unwrap(), 48).unwrap();
        let subs = (0..3)
            .map(|i| Series::new(format!("s{i}"), Unit::Kwh, index, vec![i as f64 + 1.0; 48]).unwrap())
            .collect();
        let set = HierarchicalSet::from_substations("grid", subs).unwrap();
        let temp = Series::new("temperature", Unit::Celsius, index, vec![10.0; 48]).unwrap();
        let inc = Series::new("incidence", Unit::Count, index, vec![6.0; 48]).unwrap();
        (set, temp, inc)
    }

    #[test]
    fn grid_level_without_incidence() {
        let (set, temp, _) = fixture();
        let cal = HolidayCalendar::weekends_only(2021..=2021);
        let frames = assemble_covariates(&set, &temp, None, &cal, Tz::UTC, Level::Grid).unwrap();
        assert_eq!(frames.len(), 1);
        let f = &frames[0];
        assert_eq!(f.schema.count(Horizon::Past), 1);
        assert_eq!(f.schema.count(Horizon::Future), 8);
        assert_eq!(f.schema.count(Horizon::Static), 0);
        assert_eq!(f.past_known.cols(), 1);
        assert_eq!(f.future_known.cols(), 8);
        assert!(f.static_ids.is_empty());
        assert_eq!(f.target(), vec![6.0; 48]);
    }

    #[test]
    fn substation_level_with_incidence() {
        let (set, temp, inc) = fixture();
        let cal = HolidayCalendar::weekends_only(2021..=2021);
        let frames = assemble_covariates(&set, &temp, Some(&inc), &cal, Tz::UTC, Level::Substation).unwrap();
        assert_eq!(frames.len(), 3);
        assert_eq!(frames[2].static_ids, vec![2]);
        assert_eq!(frames[0].schema.count(Horizon::Past), 2);
        assert_eq!(frames[0].schema.names(Horizon::Static), vec![GRID_NODE_ID]);
        assert_eq!(frames[0].schema.static_cardinalities(), vec![3]);
    }

    #[test]
    fn short_temperature_is_index_mismatch() {
        let (set, temp, _) = fixture();
        let temp = temp.slice(0, 24);
        let cal = HolidayCalendar::weekends_only(2021..=2021);
        assert!(matches!(
            assemble_covariates(&set, &temp, None, &cal, Tz::UTC, Level::Grid),
            Err(PreprocessError::IndexMismatch(_))
        ));
    }

    #[test]
    fn window_slices_rows() {
        let (set, temp, _) = fixture();
        let cal = HolidayCalendar::weekends_only(2021..=2021);
        let f = &assemble_covariates(&set, &temp, None, &cal, Tz::UTC, Level::Grid).unwrap()[0];
        let w = f.window(0, 24, 12, 24).unwrap();
        assert_eq!(w.past_known.rows(), 12);
        assert_eq!(w.known.rows(), 36);
        assert!(f.window(0, 5, 12, 24).is_none());
        assert!(f.window(0, 30, 12, 24).is_none());
    }
}
