//! Hourly series containers, alignment, train/test splitting, evaluation
//! window enumeration and bottom-up aggregation.
//!
//! Every timestamp is stored in UTC. Calendar notions (midnight, Monday)
//! are evaluated against a caller-supplied [`Tz`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier given to series produced by bottom-up aggregation.
pub const GRID_ID: &str = "grid";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("timestamp {0} is not aligned to a whole hour")]
    NotHourAligned(DateTime<Utc>),
    #[error("series `{id}` has {values} values but its index has {index} hours")]
    LengthMismatch { id: String, values: usize, index: usize },
    #[error("series indices do not overlap")]
    EmptyOverlap,
    #[error("series indices differ: {0}")]
    IndexMismatch(String),
    #[error("hierarchy has no substations")]
    EmptyHierarchy,
    #[error("split would leave an empty {side} side ({len} hours total)")]
    DegenerateSplit { side: &'static str, len: usize },
    #[error("invalid split fraction {0}; expected 0 < fraction < 1")]
    InvalidFraction(f64),
    #[error("series `{0}` and `{1}` are not contiguous")]
    NotContiguous(String, String),
}

/// Contiguous run of hours starting at a whole UTC hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HourlyIndex {
    start: DateTime<Utc>,
    len: usize,
}

impl HourlyIndex {
    pub fn new(start: DateTime<Utc>, len: usize) -> Result<Self, SeriesError> {
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(SeriesError::NotHourAligned(start));
        }
        Ok(Self { start, len })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// First hour after the index (exclusive end).
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len)
    }

    pub fn timestamp(&self, position: usize) -> DateTime<Utc> {
        self.start + Duration::hours(position as i64)
    }

    /// Position of `ts` inside the index, if it is one of its hours.
    pub fn position(&self, ts: DateTime<Utc>) -> Option<usize> {
        let diff = ts - self.start;
        if diff.num_seconds() % 3600 != 0 || diff < Duration::zero() {
            return None;
        }
        let pos = diff.num_hours() as usize;
        (pos < self.len).then_some(pos)
    }

    pub fn iter(&self) -> impl Iterator<Item = DateTime<Utc>> + '_ {
        (0..self.len).map(move |i| self.timestamp(i))
    }

    pub fn intersect(&self, other: &HourlyIndex) -> Option<HourlyIndex> {
        let start = self.start.max(other.start);
        let end = self.end().min(other.end());
        if end <= start {
            return None;
        }
        Some(HourlyIndex {
            start,
            len: (end - start).num_hours() as usize,
        })
    }

    /// Sub-index of `len` hours starting `offset` hours in.
    pub fn slice(&self, offset: usize, len: usize) -> HourlyIndex {
        assert!(offset + len <= self.len, "slice out of bounds");
        HourlyIndex {
            start: self.timestamp(offset),
            len,
        }
    }
}

/// Per-hour measurement quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Ok,
    Provisional,
    Defective,
    Incorrect,
    Missing,
}

impl Quality {
    pub fn is_ok(self) -> bool {
        self == Quality::Ok
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quality::Ok => "ok",
            Quality::Provisional => "provisional",
            Quality::Defective => "defective",
            Quality::Incorrect => "incorrect",
            Quality::Missing => "missing",
        }
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ok" => Ok(Quality::Ok),
            "provisional" => Ok(Quality::Provisional),
            "defective" => Ok(Quality::Defective),
            "incorrect" => Ok(Quality::Incorrect),
            "missing" => Ok(Quality::Missing),
            other => Err(format!("unknown quality flag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Kwh,
    Kw,
    Celsius,
    Count,
    Dimensionless,
}

/// Hourly values with per-hour quality flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    id: String,
    unit: Unit,
    index: HourlyIndex,
    values: Vec<f64>,
    quality: Vec<Quality>,
}

impl Series {
    /// Series with every hour flagged ok.
    pub fn new(
        id: impl Into<String>,
        unit: Unit,
        index: HourlyIndex,
        values: Vec<f64>,
    ) -> Result<Self, SeriesError> {
        let quality = vec![Quality::Ok; values.len()];
        Self::with_quality(id, unit, index, values, quality)
    }

    pub fn with_quality(
        id: impl Into<String>,
        unit: Unit,
        index: HourlyIndex,
        values: Vec<f64>,
        quality: Vec<Quality>,
    ) -> Result<Self, SeriesError> {
        let id = id.into();
        if values.len() != index.len() || quality.len() != index.len() {
            return Err(SeriesError::LengthMismatch {
                id,
                values: values.len(),
                index: index.len(),
            });
        }
        Ok(Self {
            id,
            unit,
            index,
            values,
            quality,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn index(&self) -> &HourlyIndex {
        &self.index
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn quality(&self) -> &[Quality] {
        &self.quality
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Positions whose flag is not ok.
    pub fn flagged_positions(&self) -> Vec<usize> {
        self.quality
            .iter()
            .enumerate()
            .filter(|(_, q)| !q.is_ok())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Replace values and flags, keeping id, unit and index.
    pub fn replace_values(&self, values: Vec<f64>, quality: Vec<Quality>) -> Result<Series, SeriesError> {
        Series::with_quality(self.id.clone(), self.unit, self.index, values, quality)
    }

    pub fn slice(&self, offset: usize, len: usize) -> Series {
        Series {
            id: self.id.clone(),
            unit: self.unit,
            index: self.index.slice(offset, len),
            values: self.values[offset..offset + len].to_vec(),
            quality: self.quality[offset..offset + len].to_vec(),
        }
    }

    /// Restrict to `index`, which must lie inside this series' index.
    pub fn restrict(&self, index: &HourlyIndex) -> Option<Series> {
        if index.is_empty() {
            return None;
        }
        let offset = self.index.position(index.start())?;
        (offset + index.len() <= self.len()).then(|| self.slice(offset, index.len()))
    }

    /// Append `next`, which must start where `self` ends.
    pub fn concat(&self, next: &Series) -> Result<Series, SeriesError> {
        if self.index.end() != next.index.start() {
            return Err(SeriesError::NotContiguous(self.id.clone(), next.id.clone()));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&next.values);
        let mut quality = self.quality.clone();
        quality.extend_from_slice(&next.quality);
        let index = HourlyIndex::new(self.index.start(), values.len())?;
        Series::with_quality(self.id.clone(), self.unit, index, values, quality)
    }
}

/// Grid series plus its substations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalSet {
    pub grid: Series,
    pub substations: Vec<Series>,
    /// substation id -> grid id
    pub membership: BTreeMap<String, String>,
}

impl HierarchicalSet {
    /// Build a set whose grid is the sum of `substations`.
    pub fn from_substations(grid_id: &str, substations: Vec<Series>) -> Result<HierarchicalSet, SeriesError> {
        let membership = substations
            .iter()
            .map(|s| (s.id().to_string(), grid_id.to_string()))
            .collect();
        let grid = aggregate_bottom_up(&substations)?.with_id(grid_id);
        Ok(HierarchicalSet {
            grid,
            substations,
            membership,
        })
    }

    pub fn index(&self) -> &HourlyIndex {
        self.grid.index()
    }

    /// Largest absolute deviation between the grid and the substation sum.
    pub fn max_grid_residual(&self) -> f64 {
        (0..self.grid.len())
            .map(|t| {
                let sum: f64 = self.substations.iter().map(|s| s.values()[t]).sum();
                let g = self.grid.values()[t];
                (g - sum).abs() / g.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }

    /// Apply `f` to every substation and rebuild the grid from the results.
    pub fn map_substations<E>(
        &self,
        mut f: impl FnMut(&Series) -> Result<Series, E>,
    ) -> Result<HierarchicalSet, E>
    where
        E: From<SeriesError>,
    {
        let substations = self
            .substations
            .iter()
            .map(&mut f)
            .collect::<Result<Vec<_>, E>>()?;
        let set = HierarchicalSet {
            grid: self.grid.clone(),
            substations,
            membership: self.membership.clone(),
        };
        Ok(rebuild_grid(&set)?)
    }
}

/// How to cut a series into train and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSpec {
    /// Share of hours that go to training.
    Fraction(f64),
    /// First hour of the test span.
    Boundary(DateTime<Utc>),
}

impl SplitSpec {
    pub fn fraction(fraction: f64) -> Result<Self, SeriesError> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(SeriesError::InvalidFraction(fraction));
        }
        Ok(SplitSpec::Fraction(fraction))
    }

    /// Number of training hours for a series of `len` hours.
    pub fn train_len(&self, index: &HourlyIndex) -> Result<usize, SeriesError> {
        let n = index.len();
        let train = match *self {
            SplitSpec::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(SeriesError::InvalidFraction(f));
                }
                (f * n as f64).floor() as usize
            }
            SplitSpec::Boundary(b) => {
                if b <= index.start() {
                    0
                } else if b >= index.end() {
                    n
                } else {
                    (b - index.start()).num_hours() as usize
                }
            }
        };
        if train == 0 {
            return Err(SeriesError::DegenerateSplit {
                side: "train",
                len: n,
            });
        }
        if train >= n {
            return Err(SeriesError::DegenerateSplit { side: "test", len: n });
        }
        Ok(train)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Day,
    Week,
}

impl WindowKind {
    pub fn horizon(self) -> usize {
        match self {
            WindowKind::Day => 24,
            WindowKind::Week => 168,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WindowKind::Day => "day",
            WindowKind::Week => "week",
        }
    }
}

impl FromStr for WindowKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(WindowKind::Day),
            "week" => Ok(WindowKind::Week),
            other => Err(format!("unknown horizon `{other}` (expected day or week)")),
        }
    }
}

/// Half-open run of hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HourSpan {
    pub start: DateTime<Utc>,
    pub len: usize,
}

impl HourSpan {
    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::hours(self.len as i64)
    }
}

/// A forecast origin: `input` hours of context followed by `target` hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvalWindow {
    pub input: HourSpan,
    pub target: HourSpan,
    pub kind: WindowKind,
}

/// Truncate every series to the common overlap of their indices.
pub fn align(series: &[Series]) -> Result<Vec<Series>, SeriesError> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    let overlap = series
        .iter()
        .skip(1)
        .try_fold(*first.index(), |acc, s| acc.intersect(s.index()))
        .ok_or(SeriesError::EmptyOverlap)?;
    Ok(series
        .iter()
        .map(|s| s.restrict(&overlap).expect("overlap lies inside every index"))
        .collect())
}

/// Split into a leading train span and a trailing test span.
pub fn time_split(series: &Series, spec: &SplitSpec) -> Result<(Series, Series), SeriesError> {
    let n = series.len();
    if n < 2 {
        return Err(SeriesError::DegenerateSplit { side: "test", len: n });
    }
    let train_len = spec.train_len(series.index())?;
    Ok((series.slice(0, train_len), series.slice(train_len, n - train_len)))
}

/// Enumerate every complete local day (or Monday-to-Sunday week) inside
/// `test` whose `k` input hours are available.
///
/// `history` is the number of hours immediately preceding `test` that may
/// serve as input context (normally the length of the training span).
pub fn enumerate_eval_windows(
    test: &HourlyIndex,
    history: usize,
    k: usize,
    kind: WindowKind,
    zone: Tz,
) -> Vec<EvalWindow> {
    let horizon = kind.horizon();
    let mut windows = Vec::new();
    if test.len() < horizon || k == 0 {
        return windows;
    }
    for i in 0..=test.len() - horizon {
        let ts = test.timestamp(i);
        let local = zone.from_utc_datetime(&ts.naive_utc());
        if local.hour() != 0 {
            continue;
        }
        if kind == WindowKind::Week && local.weekday() != Weekday::Mon {
            continue;
        }
        if history + i < k {
            continue;
        }
        windows.push(EvalWindow {
            input: HourSpan {
                start: ts - Duration::hours(k as i64),
                len: k,
            },
            target: HourSpan {
                start: ts,
                len: horizon,
            },
            kind,
        });
    }
    windows
}

/// Order-independent sum: values are sorted before compensated summation,
/// so any permutation of the inputs yields the same bits.
fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for &v in values.iter() {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

fn sum_series(parts: &[Series], id: &str) -> Result<Series, SeriesError> {
    let first = parts.first().ok_or(SeriesError::EmptyHierarchy)?;
    for s in parts {
        if s.index() != first.index() {
            return Err(SeriesError::IndexMismatch(format!(
                "`{}` spans {} hours from {}, `{}` spans {} hours from {}",
                first.id(),
                first.len(),
                first.index().start(),
                s.id(),
                s.len(),
                s.index().start()
            )));
        }
    }
    let mut scratch = vec![0.0; parts.len()];
    let mut values = Vec::with_capacity(first.len());
    let mut quality = Vec::with_capacity(first.len());
    for t in 0..first.len() {
        for (slot, s) in scratch.iter_mut().zip(parts) {
            *slot = s.values()[t];
        }
        values.push(stable_sum(&mut scratch));
        quality.push(
            parts
                .iter()
                .map(|s| s.quality()[t])
                .find(|q| !q.is_ok())
                .unwrap_or(Quality::Ok),
        );
    }
    Series::with_quality(id, first.unit(), *first.index(), values, quality)
}

/// Sum substation forecasts hour by hour into a grid-level series.
pub fn aggregate_bottom_up(substation_forecasts: &[Series]) -> Result<Series, SeriesError> {
    sum_series(substation_forecasts, GRID_ID)
}

/// Replace the grid series by the hourly sum of the substations.
pub fn rebuild_grid(set: &HierarchicalSet) -> Result<HierarchicalSet, SeriesError> {
    let grid = sum_series(&set.substations, set.grid.id())?;
    Ok(HierarchicalSet {
        grid,
        substations: set.substations.clone(),
        membership: set.membership.clone(),
    })
}

/// Parse a `YYYY-MM-DD` or RFC 3339 timestamp into UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Some(Utc.from_utc_datetime(&dt));
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Some(Utc.from_utc_datetime(&dt));
    }
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(y: i32, m: u32, d: u32, h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, h, 0, 0).unwrap()
    }

    fn series(id: &str, start: DateTime<Utc>, values: Vec<f64>) -> Series {
        let index = HourlyIndex::new(start, values.len()).unwrap();
        Series::new(id, Unit::Kwh, index, values).unwrap()
    }

    #[test]
    fn index_rejects_unaligned_start() {
        let start = Utc.with_ymd_and_hms(2021, 1, 1, 3, 30, 0).unwrap();
        assert!(matches!(
            HourlyIndex::new(start, 3),
            Err(SeriesError::NotHourAligned(_))
        ));
    }

    #[test]
    fn align_truncates_to_overlap() {
        let a = series("a", ts(2021, 1, 1, 0), vec![1.0; 10 * 24]);
        let b = series("b", ts(2021, 1, 5, 0), vec![2.0; 11 * 24]);
        let out = align(&[a, b]).unwrap();
        for s in &out {
            assert_eq!(s.index().start(), ts(2021, 1, 5, 0));
            assert_eq!(s.index().end(), ts(2021, 1, 11, 0));
        }
        assert_eq!(out[0].values(), &[1.0; 6 * 24][..]);
    }

    #[test]
    fn align_identical_is_identity() {
        let a = series("a", ts(2021, 1, 1, 0), vec![1.0, 2.0, 3.0]);
        let b = series("b", ts(2021, 1, 1, 0), vec![4.0, 5.0, 6.0]);
        let out = align(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn align_disjoint_fails() {
        let a = series("a", ts(2021, 1, 1, 0), vec![1.0; 24]);
        let b = series("b", ts(2021, 2, 1, 0), vec![1.0; 24]);
        assert_eq!(align(&[a, b]), Err(SeriesError::EmptyOverlap));
    }

    #[test]
    fn fraction_split_floors() {
        let s = series("s", ts(2021, 1, 1, 0), (0..100).map(f64::from).collect());
        let (train, test) = time_split(&s, &SplitSpec::fraction(0.8).unwrap()).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(train.concat(&test).unwrap(), s);
    }

    #[test]
    fn boundary_split_ends_train_before_boundary() {
        let start = ts(2019, 1, 1, 0);
        let len = (ts(2022, 1, 1, 0) - start).num_hours() as usize;
        let s = series("de", start, vec![1.0; len]);
        let (train, test) = time_split(&s, &SplitSpec::Boundary(ts(2021, 5, 24, 0))).unwrap();
        assert_eq!(train.index().timestamp(train.len() - 1), ts(2021, 5, 23, 23));
        assert_eq!(test.index().start(), ts(2021, 5, 24, 0));
        assert_eq!(test.index().end(), ts(2022, 1, 1, 0));
    }

    #[test]
    fn full_fraction_is_degenerate() {
        let s = series("s", ts(2021, 1, 1, 0), vec![1.0; 10]);
        assert!(SplitSpec::fraction(1.0).is_err());
        assert!(matches!(
            time_split(&s, &SplitSpec::Fraction(1.0)),
            Err(SeriesError::DegenerateSplit { side: "test", .. })
        ));
        assert!(matches!(
            time_split(&s, &SplitSpec::Fraction(0.01)),
            Err(SeriesError::DegenerateSplit { side: "train", .. })
        ));
    }

    #[test]
    fn ten_days_give_ten_day_windows() {
        let test = HourlyIndex::new(ts(2021, 3, 10, 0), 240).unwrap();
        let w = enumerate_eval_windows(&test, 48, 48, WindowKind::Day, Tz::UTC);
        assert_eq!(w.len(), 10);
        assert_eq!(w[0].input.start, ts(2021, 3, 8, 0));
        assert_eq!(w[0].input.end(), w[0].target.start);
    }

    #[test]
    fn input_context_must_be_available() {
        let test = HourlyIndex::new(ts(2021, 3, 10, 0), 240).unwrap();
        let w = enumerate_eval_windows(&test, 0, 48, WindowKind::Day, Tz::UTC);
        assert_eq!(w.len(), 8);
    }

    #[test]
    fn weeks_start_on_monday() {
        // 2021-03-03 is a Wednesday; the span holds Mon 8th, 15th, 22nd weeks.
        let start = ts(2021, 3, 3, 0);
        let end = ts(2021, 3, 31, 0);
        let test = HourlyIndex::new(start, (end - start).num_hours() as usize).unwrap();
        let w = enumerate_eval_windows(&test, 1000, 168, WindowKind::Week, Tz::UTC);
        let starts: Vec<_> = w.iter().map(|w| w.target.start).collect();
        assert_eq!(
            starts,
            vec![ts(2021, 3, 8, 0), ts(2021, 3, 15, 0), ts(2021, 3, 22, 0)]
        );
    }

    #[test]
    fn short_test_span_has_no_windows() {
        let test = HourlyIndex::new(ts(2021, 3, 10, 0), 23).unwrap();
        assert!(enumerate_eval_windows(&test, 100, 24, WindowKind::Day, Tz::UTC).is_empty());
    }

    #[test]
    fn day_windows_follow_local_midnight() {
        let test = HourlyIndex::new(ts(2021, 6, 1, 0), 24 * 5).unwrap();
        let w = enumerate_eval_windows(&test, 100, 24, WindowKind::Day, chrono_tz::Europe::Berlin);
        // Berlin is UTC+2 in June: local midnight is 22:00 UTC.
        assert_eq!(w[0].target.start, ts(2021, 6, 1, 22));
        assert_eq!(w.len(), 4);
    }

    #[test]
    fn aggregate_sums_per_hour() {
        let a = series("a", ts(2021, 1, 1, 0), vec![10.0, 20.0]);
        let b = series("b", ts(2021, 1, 1, 0), vec![5.0, 5.0]);
        let g = aggregate_bottom_up(&[a.clone(), b]).unwrap();
        assert_eq!(g.values(), &[15.0, 25.0]);
        assert_eq!(g.id(), GRID_ID);
        assert_eq!(
            aggregate_bottom_up(std::slice::from_ref(&a)).unwrap().values(),
            a.values()
        );
    }

    #[test]
    fn aggregate_rejects_mismatch() {
        let a = series("a", ts(2021, 1, 1, 0), vec![10.0, 20.0]);
        let b = series("b", ts(2021, 1, 1, 0), vec![5.0, 5.0, 5.0]);
        assert!(matches!(
            aggregate_bottom_up(&[a, b]),
            Err(SeriesError::IndexMismatch(_))
        ));
    }

    #[test]
    fn rebuild_grid_sums_constant_substations() {
        let subs: Vec<_> = (0..3)
            .map(|i| series(&format!("s{i}"), ts(2021, 1, 1, 0), vec![1.0; 48]))
            .collect();
        let mut set = HierarchicalSet::from_substations("grid", subs).unwrap();
        set.grid = series("grid", ts(2021, 1, 1, 0), vec![0.0; 48]);
        let rebuilt = rebuild_grid(&set).unwrap();
        assert!(rebuilt.grid.values().iter().all(|&v| v == 3.0));
        assert_eq!(rebuilt.grid.id(), "grid");
    }

    #[test]
    fn rebuild_grid_without_substations_fails() {
        let set = HierarchicalSet {
            grid: series("grid", ts(2021, 1, 1, 0), vec![1.0]),
            substations: vec![],
            membership: BTreeMap::new(),
        };
        assert_eq!(rebuild_grid(&set), Err(SeriesError::EmptyHierarchy));
    }
}
