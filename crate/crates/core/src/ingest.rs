//! Readers and writers for the wide GEFC'12 load/temperature files, the
//! long household meter format, daily incidence files, and a seeded
//! synthetic hierarchy generator.
//!
//! Readers refuse input whose hourly continuity cannot be established
//! (missing days, duplicated or out-of-order timestamps). Empty cells in
//! wide files are kept as `NaN` flagged [`Quality::Missing`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{parse_timestamp, HierarchicalSet, HourlyIndex, Quality, Series, SeriesError, Unit};

/// GEFC'12 zones dropped on ingest (zone 9 is a single industrial customer).
pub const GEFC_EXCLUDED_ZONES: &[u32] = &[9];

const HOURS: usize = 24;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("zone {zone} has no data for {date}")]
    MissingZone { zone: u32, date: NaiveDate },
    #[error("`{id}`: timestamps are not strictly increasing at row {row}")]
    NonMonotonicTimestamps { id: String, row: usize },
    #[error("`{id}`: gap in hourly data between {after} and {before}")]
    Gap {
        id: String,
        after: String,
        before: String,
    },
    #[error("no station reports a temperature for {0}")]
    NoStationData(DateTime<Utc>),
    #[error("file contains no data rows")]
    Empty,
    #[error(transparent)]
    Series(#[from] SeriesError),
}

impl IngestError {
    fn parse(row: usize, column: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::Parse {
            row,
            column: column.into(),
            message: message.into(),
        }
    }
}

/// Non-fatal irregularities found while reading.
#[derive(Debug, Clone, PartialEq)]
pub enum IngestWarning {
    /// Stations do not cover the same hours; the hour was averaged over `available` stations.
    StationCountMismatch {
        at: DateTime<Utc>,
        available: usize,
        expected: usize,
    },
    /// A missing incidence day was filled with the previous day's value.
    ForwardFilled { date: NaiveDate },
}

/// Value read together with the warnings raised while reading it.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<IngestWarning>,
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn log_warnings(path: &Path, warnings: &[IngestWarning]) {
    if let Some(first) = warnings.first() {
        log::warn!(
            "{}: {} irregularities, first: {:?}",
            path.display(),
            warnings.len(),
            first
        );
    }
}

fn midnight(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight exists"))
}

/// Parse a load/temperature cell. Thousands separators inside quoted
/// cells (`"16,853"`) are accepted; an empty cell is a missing value.
fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>, IngestError> {
    let cell = raw.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let cleaned: String = cell.chars().filter(|&c| c != ',').collect();
    let v: f64 = cleaned
        .parse()
        .map_err(|_| IngestError::parse(row, column, format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(IngestError::parse(row, column, "value is not finite"));
    }
    Ok(Some(v))
}

struct WideRow {
    key: u32,
    date: NaiveDate,
    hours: [Option<f64>; HOURS],
}

/// Shared parser for `<key>,year,month,day,h1..h24` files.
fn parse_wide<R: Read>(reader: R, key_column: &str) -> Result<Vec<WideRow>, IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| IngestError::parse(1, "header", e.to_string()))?
        .clone();
    let mut expected = vec![
        key_column.to_string(),
        "year".into(),
        "month".into(),
        "day".into(),
    ];
    expected.extend((1..=HOURS).map(|h| format!("h{h}")));
    if headers.len() != expected.len() || headers.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(IngestError::parse(
            1,
            "header",
            format!("expected `{}`", expected.join(",")),
        ));
    }

    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        // Header is line 1.
        let row = i + 2;
        let record = record.map_err(|e| IngestError::parse(row, "record", e.to_string()))?;
        if record.len() != expected.len() {
            return Err(IngestError::parse(
                row,
                "record",
                format!("expected {} fields, found {}", expected.len(), record.len()),
            ));
        }
        let int = |col: usize| -> Result<i64, IngestError> {
            record[col].parse::<i64>().map_err(|_| {
                IngestError::parse(
                    row,
                    &expected[col],
                    format!("`{}` is not an integer", &record[col]),
                )
            })
        };
        let key = int(0)?;
        if key < 1 || key > u32::MAX as i64 {
            return Err(IngestError::parse(row, key_column, "identifier must be >= 1"));
        }
        let (year, month, day) = (int(1)?, int(2)?, int(3)?);
        let date = i32::try_from(year)
            .ok()
            .zip(u32::try_from(month).ok())
            .zip(u32::try_from(day).ok())
            .and_then(|((y, m), d)| NaiveDate::from_ymd_opt(y, m, d))
            .ok_or_else(|| {
                IngestError::parse(row, "day", format!("{year}-{month}-{day} is not a valid date"))
            })?;
        let mut hours = [None; HOURS];
        for (h, slot) in hours.iter_mut().enumerate() {
            *slot = parse_cell(&record[4 + h], row, &expected[4 + h])?;
        }
        rows.push(WideRow {
            key: key as u32,
            date,
            hours,
        });
    }
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(rows)
}

/// Hourly cells of each day, keyed by date.
type DayMap = BTreeMap<NaiveDate, [Option<f64>; HOURS]>;

/// Per-key day map with continuity checks.
fn group_days(rows: Vec<WideRow>, label: &str) -> Result<BTreeMap<u32, DayMap>, IngestError> {
    let mut grouped: BTreeMap<u32, DayMap> = BTreeMap::new();
    for (i, r) in rows.into_iter().enumerate() {
        if grouped
            .entry(r.key)
            .or_default()
            .insert(r.date, r.hours)
            .is_some()
        {
            return Err(IngestError::NonMonotonicTimestamps {
                id: format!("{label} {}", r.key),
                row: i + 2,
            });
        }
    }
    Ok(grouped)
}

fn date_range(first: NaiveDate, last: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    first.iter_days().take_while(move |d| *d <= last)
}

/// Read a GEFC'12 wide load file into a substation hierarchy, dropping
/// [`GEFC_EXCLUDED_ZONES`].
pub fn read_gefc_load(path: impl AsRef<Path>) -> Result<HierarchicalSet, IngestError> {
    parse_gefc_load(open(path.as_ref())?, GEFC_EXCLUDED_ZONES)
}

pub fn parse_gefc_load<R: Read>(reader: R, excluded_zones: &[u32]) -> Result<HierarchicalSet, IngestError> {
    let grouped = group_days(parse_wide(reader, "zone_id")?, "zone")?;
    let first = grouped.values().filter_map(|d| d.keys().next()).min().copied();
    let last = grouped
        .values()
        .filter_map(|d| d.keys().next_back())
        .max()
        .copied();
    let (first, last) = first.zip(last).ok_or(IngestError::Empty)?;
    let days = (last - first).num_days() as usize + 1;
    let index = HourlyIndex::new(midnight(first), days * HOURS)?;

    let mut substations = Vec::new();
    for (zone, day_map) in &grouped {
        let mut values = Vec::with_capacity(index.len());
        let mut quality = Vec::with_capacity(index.len());
        for date in date_range(first, last) {
            let hours = day_map
                .get(&date)
                .ok_or(IngestError::MissingZone { zone: *zone, date })?;
            for h in hours {
                values.push(h.unwrap_or(f64::NAN));
                quality.push(if h.is_some() {
                    Quality::Ok
                } else {
                    Quality::Missing
                });
            }
        }
        if excluded_zones.contains(zone) {
            continue;
        }
        substations.push(Series::with_quality(
            format!("zone_{zone}"),
            Unit::Kwh,
            index,
            values,
            quality,
        )?);
    }
    if substations.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(HierarchicalSet::from_substations("grid", substations)?)
}

/// Read a GEFC'12 station temperature file and average all stations per hour.
pub fn read_gefc_temperature(path: impl AsRef<Path>) -> Result<Series, IngestError> {
    let parsed = parse_gefc_temperature(open(path.as_ref())?)?;
    log_warnings(path.as_ref(), &parsed.warnings);
    Ok(parsed.value)
}

pub fn parse_gefc_temperature<R: Read>(reader: R) -> Result<Parsed<Series>, IngestError> {
    let grouped = group_days(parse_wide(reader, "station_id")?, "station")?;
    let first = grouped.values().filter_map(|d| d.keys().next()).min().copied();
    let last = grouped
        .values()
        .filter_map(|d| d.keys().next_back())
        .max()
        .copied();
    let (first, last) = first.zip(last).ok_or(IngestError::Empty)?;
    let stations = grouped.len();
    let days = (last - first).num_days() as usize + 1;
    let index = HourlyIndex::new(midnight(first), days * HOURS)?;

    let mut values = Vec::with_capacity(index.len());
    let mut warnings = Vec::new();
    for date in date_range(first, last) {
        for h in 0..HOURS {
            let readings: Vec<f64> = grouped
                .values()
                .filter_map(|days| days.get(&date).and_then(|hours| hours[h]))
                .collect();
            let at = midnight(date) + Duration::hours(h as i64);
            if readings.is_empty() {
                return Err(IngestError::NoStationData(at));
            }
            if readings.len() != stations {
                warnings.push(IngestWarning::StationCountMismatch {
                    at,
                    available: readings.len(),
                    expected: stations,
                });
            }
            values.push(readings.iter().sum::<f64>() / readings.len() as f64);
        }
    }
    Ok(Parsed {
        value: Series::new("temperature", Unit::Celsius, index, values)?,
        warnings,
    })
}

/// Read the long household format `household_id,timestamp,value_kwh,quality`.
pub fn read_household_long(path: impl AsRef<Path>) -> Result<Vec<Series>, IngestError> {
    parse_household_long(open(path.as_ref())?)
}

pub fn parse_household_long<R: Read>(reader: R) -> Result<Vec<Series>, IngestError> {
    struct Acc {
        start: DateTime<Utc>,
        last: DateTime<Utc>,
        values: Vec<f64>,
        quality: Vec<Quality>,
    }

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| IngestError::parse(1, "header", e.to_string()))?
        .clone();
    let expected = ["household_id", "timestamp", "value_kwh", "quality"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(IngestError::parse(
            1,
            "header",
            format!("expected `{}`", expected.join(",")),
        ));
    }

    let mut households: BTreeMap<String, Acc> = BTreeMap::new();
    for (i, record) in csv.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| IngestError::parse(row, "record", e.to_string()))?;
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(IngestError::parse(row, "household_id", "empty identifier"));
        }
        let ts = parse_timestamp(&record[1]).ok_or_else(|| {
            IngestError::parse(row, "timestamp", format!("`{}` is not a timestamp", &record[1]))
        })?;
        if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
            return Err(IngestError::parse(
                row,
                "timestamp",
                "timestamp is not on a whole hour",
            ));
        }
        let quality: Quality = record[3]
            .parse()
            .map_err(|e: String| IngestError::parse(row, "quality", e))?;
        let value = match parse_cell(&record[2], row, "value_kwh")? {
            Some(v) => v,
            None if !quality.is_ok() => f64::NAN,
            None => return Err(IngestError::parse(row, "value_kwh", "missing value flagged ok")),
        };
        match households.get_mut(&id) {
            None => {
                households.insert(
                    id,
                    Acc {
                        start: ts,
                        last: ts,
                        values: vec![value],
                        quality: vec![quality],
                    },
                );
            }
            Some(acc) => {
                if ts <= acc.last {
                    return Err(IngestError::NonMonotonicTimestamps { id, row });
                }
                if ts - acc.last != Duration::hours(1) {
                    return Err(IngestError::Gap {
                        id,
                        after: acc.last.to_rfc3339(),
                        before: ts.to_rfc3339(),
                    });
                }
                acc.last = ts;
                acc.values.push(value);
                acc.quality.push(quality);
            }
        }
    }
    if households.is_empty() {
        return Err(IngestError::Empty);
    }
    households
        .into_iter()
        .map(|(id, acc)| {
            let index = HourlyIndex::new(acc.start, acc.values.len())?;
            Ok(Series::with_quality(
                id,
                Unit::Kwh,
                index,
                acc.values,
                acc.quality,
            )?)
        })
        .collect()
}

/// Read a daily `date,incidence` file into an hourly series.
pub fn read_incidence(path: impl AsRef<Path>) -> Result<Series, IngestError> {
    let parsed = parse_incidence(open(path.as_ref())?)?;
    log_warnings(path.as_ref(), &parsed.warnings);
    Ok(parsed.value)
}

pub fn parse_incidence<R: Read>(reader: R) -> Result<Parsed<Series>, IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| IngestError::parse(1, "header", e.to_string()))?
        .clone();
    if headers.iter().ne(["date", "incidence"]) {
        return Err(IngestError::parse(1, "header", "expected `date,incidence`"));
    }
    let mut days: Vec<(NaiveDate, f64)> = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| IngestError::parse(row, "record", e.to_string()))?;
        if record.len() != 2 {
            return Err(IngestError::parse(row, "record", "expected 2 fields"));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|_| IngestError::parse(row, "date", format!("`{}` is not YYYY-MM-DD", &record[0])))?;
        let value = parse_cell(&record[1], row, "incidence")?
            .ok_or_else(|| IngestError::parse(row, "incidence", "empty value"))?;
        if let Some((prev, _)) = days.last() {
            if date <= *prev {
                return Err(IngestError::NonMonotonicTimestamps {
                    id: "incidence".into(),
                    row,
                });
            }
        }
        days.push((date, value));
    }
    let (first, _) = *days.first().ok_or(IngestError::Empty)?;
    let mut warnings = Vec::new();
    let mut values = Vec::new();
    let mut current = first;
    let mut carried = days[0].1;
    for (date, value) in days {
        while current < date {
            warnings.push(IngestWarning::ForwardFilled { date: current });
            values.extend(std::iter::repeat_n(carried, HOURS));
            current = current.succ_opt().expect("date in range");
        }
        values.extend(std::iter::repeat_n(value, HOURS));
        carried = value;
        current = date.succ_opt().expect("date in range");
    }
    let index = HourlyIndex::new(midnight(first), values.len())?;
    Ok(Parsed {
        value: Series::new("incidence", Unit::Count, index, values)?,
        warnings,
    })
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn write_wide<W: Write>(writer: W, key_column: &str, rows: &[(u32, &Series)]) -> Result<(), IngestError> {
    let io = |e: csv::Error| IngestError::Io {
        path: "<writer>".into(),
        source: e.into(),
    };
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec![
        key_column.to_string(),
        "year".into(),
        "month".into(),
        "day".into(),
    ];
    header.extend((1..=HOURS).map(|h| format!("h{h}")));
    out.write_record(&header).map_err(io)?;
    for (key, series) in rows {
        let index = series.index();
        if index.start().hour() != 0 || index.len() % HOURS != 0 {
            return Err(IngestError::Series(SeriesError::IndexMismatch(format!(
                "`{}` does not cover whole UTC days",
                series.id()
            ))));
        }
        for day in 0..index.len() / HOURS {
            let date = index.timestamp(day * HOURS).date_naive();
            let mut record = vec![
                key.to_string(),
                date.format("%Y").to_string(),
                date.format("%-m").to_string(),
                date.format("%-d").to_string(),
            ];
            record.extend(
                series.values()[day * HOURS..(day + 1) * HOURS]
                    .iter()
                    .map(|&v| fmt_cell(v)),
            );
            out.write_record(&record).map_err(io)?;
        }
    }
    out.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })
}

/// Write substations as a GEFC'12 wide load file; zone ids are taken from
/// `zone_<n>` series ids, falling back to 1-based position.
pub fn write_gefc_load<W: Write>(writer: W, substations: &[Series]) -> Result<(), IngestError> {
    let rows: Vec<(u32, &Series)> = substations
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let zone = s
                .id()
                .strip_prefix("zone_")
                .and_then(|z| z.parse().ok())
                .unwrap_or(i as u32 + 1);
            (zone, s)
        })
        .collect();
    write_wide(writer, "zone_id", &rows)
}

/// Write one temperature series as station 1 of a GEFC'12 temperature file.
pub fn write_gefc_temperature<W: Write>(writer: W, temperature: &Series) -> Result<(), IngestError> {
    write_wide(writer, "station_id", &[(1, temperature)])
}

pub fn write_household_long<W: Write>(writer: W, series: &[Series]) -> Result<(), IngestError> {
    let io = |e: csv::Error| IngestError::Io {
        path: "<writer>".into(),
        source: e.into(),
    };
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["household_id", "timestamp", "value_kwh", "quality"])
        .map_err(io)?;
    for s in series {
        for (i, ts) in s.index().iter().enumerate() {
            out.write_record([
                s.id().to_string(),
                ts.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                fmt_cell(s.values()[i]),
                s.quality()[i].to_string(),
            ])
            .map_err(io)?;
        }
    }
    out.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })
}

/// Knobs for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_substations: usize,
    pub n_days: usize,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub temp_sensitivity: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// First day of the generated span (UTC midnight).
    pub start: NaiveDate,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_substations: 8,
            n_days: 90,
            daily_amplitude: 20.0,
            weekly_amplitude: 10.0,
            temp_sensitivity: 2.0,
            noise_std: 2.0,
            seed: 7,
            start: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_substations == 0 {
            return Err("n_substations must be >= 1".into());
        }
        if self.n_days == 0 {
            return Err("n_days must be >= 1".into());
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err("noise_std must be >= 0".into());
        }
        for (name, v) in [
            ("daily_amplitude", self.daily_amplitude),
            ("weekly_amplitude", self.weekly_amplitude),
            ("temp_sensitivity", self.temp_sensitivity),
            ("noise_std", self.noise_std),
        ] {
            if !v.is_finite() {
                return Err(format!("{name} must be finite"));
            }
        }
        Ok(())
    }
}

/// Reference temperature below which load rises.
pub const SYNTHETIC_T_REF: f64 = 18.0;

/// Generate a substation hierarchy and a matching temperature series.
///
/// Each substation is `base + daily + weekly + temp_sensitivity * (T_ref - T) + noise`
/// with per-substation base level, amplitude scale and phases drawn from
/// `seed`. Temperature is an annual plus daily sinusoid with a slow seeded
/// weather anomaly on top. Output is a pure function of the config.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(HierarchicalSet, Series), String> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let len = config.n_days * HOURS;
    let index = HourlyIndex::new(midnight(config.start), len).map_err(|e| e.to_string())?;

    let mut anomaly = 0.0;
    let innovation = Normal::new(0.0, 0.4).expect("valid normal");
    let temperature: Vec<f64> = index
        .iter()
        .map(|ts| {
            anomaly = 0.98 * anomaly + innovation.sample(&mut rng);
            let year_frac = (ts.date_naive().ordinal0() as f64 + ts.hour() as f64 / 24.0) / 365.0;
            let annual = 10.0 - 10.0 * (2.0 * PI * (year_frac - 0.05)).cos();
            let daily = 3.0 * (2.0 * PI * (ts.hour() as f64 - 9.0) / 24.0).sin();
            annual + daily + anomaly
        })
        .collect();

    struct Profile {
        base: f64,
        scale: f64,
        daily_phase: f64,
        weekly_phase: f64,
        temp_scale: f64,
    }
    let profiles: Vec<Profile> = (0..config.n_substations)
        .map(|_| Profile {
            base: rng.gen_range(50.0..150.0),
            scale: rng.gen_range(0.5..1.5),
            daily_phase: rng.gen_range(-PI / 4.0..PI / 4.0),
            weekly_phase: rng.gen_range(0.0..2.0 * PI),
            temp_scale: rng.gen_range(0.5..1.5),
        })
        .collect();

    let noise = (config.noise_std > 0.0).then(|| Normal::new(0.0, config.noise_std).expect("finite std"));
    let mut substations = Vec::with_capacity(config.n_substations);
    for (s, p) in profiles.iter().enumerate() {
        let values: Vec<f64> = (0..len)
            .map(|t| {
                let hour = (t % HOURS) as f64;
                let daily = config.daily_amplitude
                    * p.scale
                    * (2.0 * PI * (hour - 12.0) / 24.0 + p.daily_phase).sin();
                let weekly =
                    config.weekly_amplitude * p.scale * (2.0 * PI * t as f64 / 168.0 + p.weekly_phase).sin();
                let temp = config.temp_sensitivity * p.temp_scale * (SYNTHETIC_T_REF - temperature[t]);
                let eps = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                p.base + daily + weekly + temp + eps
            })
            .collect();
        substations.push(
            Series::new(format!("zone_{}", s + 1), Unit::Kwh, index, values).map_err(|e| e.to_string())?,
        );
    }
    let set = HierarchicalSet::from_substations("grid", substations).map_err(|e| e.to_string())?;
    let temperature =
        Series::new("temperature", Unit::Celsius, index, temperature).map_err(|e| e.to_string())?;
    Ok((set, temperature))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide_header(key: &str) -> String {
        let mut h = format!("{key},year,month,day");
        for i in 1..=24 {
            h.push_str(&format!(",h{i}"));
        }
        h
    }

    fn wide_row(key: u32, date: (i32, u32, u32), v: f64) -> String {
        let mut r = format!("{key},{},{},{}", date.0, date.1, date.2);
        for _ in 0..24 {
            r.push_str(&format!(",{v}"));
        }
        r
    }

    #[test]
    fn twenty_zones_give_nineteen_substations() {
        let mut text = wide_header("zone_id");
        for zone in 1..=20 {
            for day in 1..=2 {
                text.push('\n');
                text.push_str(&wide_row(zone, (2004, 1, day), zone as f64));
            }
        }
        let set = parse_gefc_load(text.as_bytes(), GEFC_EXCLUDED_ZONES).unwrap();
        assert_eq!(set.substations.len(), 19);
        assert!(set.substations.iter().all(|s| s.id() != "zone_9"));
        assert!(set.substations.iter().any(|s| s.id() == "zone_4"));
        assert_eq!(set.grid.len(), 48);
        assert_eq!(
            set.grid.values()[0],
            (1..=20).filter(|&z| z != 9).sum::<u32>() as f64
        );
    }

    #[test]
    fn one_row_maps_to_one_day() {
        let text = format!("{}\n{}", wide_header("zone_id"), wide_row(1, (2004, 1, 1), 1.0));
        let set = parse_gefc_load(text.as_bytes(), &[]).unwrap();
        assert_eq!(set.substations[0].values(), &[1.0; 24][..]);
    }

    #[test]
    fn malformed_cell_names_row_and_column() {
        let mut row = wide_row(1, (2004, 1, 1), 1.0);
        let mut cells: Vec<&str> = row.split(',').collect();
        cells[4 + 12] = "abc";
        row = cells.join(",");
        let text = format!("{}\n{}", wide_header("zone_id"), row);
        match parse_gefc_load(text.as_bytes(), &[]) {
            Err(IngestError::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "h13");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zone_missing_a_day_is_rejected() {
        let text = format!(
            "{}\n{}\n{}\n{}",
            wide_header("zone_id"),
            wide_row(1, (2004, 1, 1), 1.0),
            wide_row(1, (2004, 1, 2), 1.0),
            wide_row(2, (2004, 1, 1), 1.0),
        );
        assert!(matches!(
            parse_gefc_load(text.as_bytes(), &[]),
            Err(IngestError::MissingZone { zone: 2, .. })
        ));
    }

    #[test]
    fn quoted_thousands_are_accepted() {
        let mut row = "1,2004,1,1".to_string();
        for _ in 0..24 {
            row.push_str(",\"16,853\"");
        }
        let text = format!("{}\n{}", wide_header("zone_id"), row);
        let set = parse_gefc_load(text.as_bytes(), &[]).unwrap();
        assert_eq!(set.grid.values()[0], 16853.0);
    }

    #[test]
    fn temperature_is_station_mean() {
        let mut text = wide_header("station_id");
        for st in 1..=11 {
            text.push('\n');
            text.push_str(&wide_row(st, (2004, 1, 1), 20.0));
        }
        let t = parse_gefc_temperature(text.as_bytes()).unwrap();
        assert!(t.warnings.is_empty());
        assert!(t.value.values().iter().all(|&v| v == 20.0));

        let text = format!(
            "{}\n{}\n{}",
            wide_header("station_id"),
            wide_row(1, (2004, 1, 1), 10.0),
            wide_row(2, (2004, 1, 1), 30.0)
        );
        let t = parse_gefc_temperature(text.as_bytes()).unwrap();
        assert!(t.value.values().iter().all(|&v| v == 20.0));
    }

    #[test]
    fn missing_station_hour_averages_the_rest() {
        let mut text = wide_header("station_id");
        for st in 1..=11u32 {
            let mut row = wide_row(st, (2004, 1, 1), st as f64);
            if st == 11 {
                let mut cells: Vec<&str> = row.split(',').collect();
                cells[4 + 5] = "";
                row = cells.join(",");
            }
            text.push('\n');
            text.push_str(&row);
        }
        let t = parse_gefc_temperature(text.as_bytes()).unwrap();
        assert_eq!(t.warnings.len(), 1);
        assert_eq!(t.value.values()[5], (1..=10).sum::<u32>() as f64 / 10.0);
        assert_eq!(t.value.values()[6], 6.0);
    }

    fn household_text(rows: &[(&str, &str, &str, &str)]) -> String {
        let mut t = "household_id,timestamp,value_kwh,quality".to_string();
        for r in rows {
            t.push_str(&format!("\n{},{},{},{}", r.0, r.1, r.2, r.3));
        }
        t
    }

    #[test]
    fn households_group_by_id() {
        let mut text = "household_id,timestamp,value_kwh,quality".to_string();
        let start = midnight(NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
        for h in ["a", "b"] {
            for i in 0..48 {
                let ts = start + Duration::hours(i);
                let q = if i == 3 { "defective" } else { "ok" };
                text.push_str(&format!("\n{h},{},0.5,{q}", ts.to_rfc3339()));
            }
        }
        let series = parse_household_long(text.as_bytes()).unwrap();
        assert_eq!(series.len(), 2);
        assert!(series.iter().all(|s| s.len() == 48));
        assert_eq!(series[0].quality()[3], Quality::Defective);
        assert_eq!(series[0].values()[3], 0.5);
    }

    #[test]
    fn duplicate_household_timestamp_fails() {
        let text = household_text(&[
            ("a", "2021-01-01T00:00:00Z", "1", "ok"),
            ("a", "2021-01-01T00:00:00Z", "1", "ok"),
        ]);
        assert!(matches!(
            parse_household_long(text.as_bytes()),
            Err(IngestError::NonMonotonicTimestamps { row: 3, .. })
        ));
    }

    #[test]
    fn household_gap_fails() {
        let text = household_text(&[
            ("a", "2021-01-01T00:00:00Z", "1", "ok"),
            ("a", "2021-01-01T02:00:00Z", "1", "ok"),
        ]);
        assert!(matches!(
            parse_household_long(text.as_bytes()),
            Err(IngestError::Gap { .. })
        ));
    }

    #[test]
    fn household_offsets_are_normalized_to_utc() {
        let text = household_text(&[
            ("a", "2021-03-28T01:00:00+01:00", "1", "ok"),
            ("a", "2021-03-28T03:00:00+02:00", "2", "ok"),
        ]);
        let s = parse_household_long(text.as_bytes()).unwrap();
        assert_eq!(s[0].len(), 2);
    }

    #[test]
    fn incidence_repeats_daily_value() {
        let p = parse_incidence("date,incidence\n2021-01-01,6\n2021-01-02,0".as_bytes()).unwrap();
        assert_eq!(p.value.len(), 48);
        assert!(p.value.values()[..24].iter().all(|&v| v == 6.0));
        assert!(p.value.values()[24..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn incidence_gap_is_forward_filled() {
        let p = parse_incidence("date,incidence\n2021-01-01,6\n2021-01-03,9".as_bytes()).unwrap();
        assert_eq!(p.value.len(), 72);
        assert!(p.value.values()[24..48].iter().all(|&v| v == 6.0));
        assert_eq!(
            p.warnings,
            vec![IngestWarning::ForwardFilled {
                date: NaiveDate::from_ymd_opt(2021, 1, 2).unwrap()
            }]
        );
    }

    #[test]
    fn synthetic_degenerate_config_is_constant() {
        let cfg = SyntheticConfig {
            daily_amplitude: 0.0,
            weekly_amplitude: 0.0,
            temp_sensitivity: 0.0,
            noise_std: 0.0,
            n_days: 3,
            ..Default::default()
        };
        let (set, _) = generate_synthetic(&cfg).unwrap();
        for s in &set.substations {
            let first = s.values()[0];
            assert!(s.values().iter().all(|&v| v == first));
        }
    }

    #[test]
    fn synthetic_shape_and_determinism() {
        let cfg = SyntheticConfig::default();
        let (a, ta) = generate_synthetic(&cfg).unwrap();
        let (b, tb) = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.substations.len(), 8);
        assert!(a.substations.iter().all(|s| s.len() == 2160));
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let other = generate_synthetic(&SyntheticConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(other.0, a);
    }

    #[test]
    fn gefc_write_read_round_trip() {
        let (set, temp) = generate_synthetic(&SyntheticConfig {
            n_days: 4,
            n_substations: 3,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_gefc_load(&mut buf, &set.substations).unwrap();
        let back = parse_gefc_load(buf.as_slice(), &[]).unwrap();
        assert_eq!(back.substations, set.substations);

        let mut buf = Vec::new();
        write_gefc_temperature(&mut buf, &temp).unwrap();
        assert_eq!(parse_gefc_temperature(buf.as_slice()).unwrap().value, temp);

        let mut buf = Vec::new();
        write_household_long(&mut buf, &set.substations).unwrap();
        assert_eq!(parse_household_long(buf.as_slice()).unwrap(), set.substations);
    }
}
