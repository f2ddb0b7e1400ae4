//! Cyclic calendar encoding and the holiday/weekend flag.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Read;
use std::ops::RangeInclusive;
use std::path::Path;

use chrono::{Datelike, NaiveDate, TimeZone, Timelike, Weekday};
use chrono_tz::Tz;

use super::PreprocessError;
use crate::matrix::Matrix;
use crate::timeseries::HourlyIndex;

/// Column names produced by [`encode_calendar`], in order.
pub const CALENDAR_COLUMNS: [&str; 7] = [
    "hour_sin",
    "hour_cos",
    "dow_sin",
    "dow_cos",
    "doy_sin",
    "doy_cos",
    "holiday_or_weekend",
];

/// Public holidays plus the years the list is known to be complete for.
#[derive(Debug, Clone, PartialEq)]
pub struct HolidayCalendar {
    dates: BTreeSet<NaiveDate>,
    years: RangeInclusive<i32>,
}

impl HolidayCalendar {
    pub fn new(dates: impl IntoIterator<Item = NaiveDate>, years: RangeInclusive<i32>) -> Self {
        Self {
            dates: dates.into_iter().collect(),
            years,
        }
    }

    /// Calendar without holidays, valid for `years`.
    pub fn weekends_only(years: RangeInclusive<i32>) -> Self {
        Self::new([], years)
    }

    /// Calendar from a `date,name` file; coverage is every year that
    /// appears in the file.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| PreprocessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(file)
    }

    pub fn parse<R: Read>(reader: R) -> Result<Self, PreprocessError> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = csv
            .headers()
            .map_err(|e| PreprocessError::parse(1, "header", e.to_string()))?
            .clone();
        if headers.iter().ne(["date", "name"]) {
            return Err(PreprocessError::parse(1, "header", "expected `date,name`"));
        }
        let mut dates = BTreeSet::new();
        for (i, record) in csv.records().enumerate() {
            let row = i + 2;
            let record = record.map_err(|e| PreprocessError::parse(row, "record", e.to_string()))?;
            if record.len() != 2 {
                return Err(PreprocessError::parse(row, "record", "expected 2 fields"));
            }
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|_| {
                PreprocessError::parse(row, "date", format!("`{}` is not YYYY-MM-DD", &record[0]))
            })?;
            dates.insert(date);
        }
        let first = dates.first().map(|d| d.year());
        let last = dates.last().map(|d| d.year());
        let (first, last) = first
            .zip(last)
            .ok_or_else(|| PreprocessError::parse(2, "date", "holiday file lists no dates"))?;
        Ok(Self {
            dates,
            years: first..=last,
        })
    }

    pub fn covers(&self, date: NaiveDate) -> bool {
        self.years.contains(&date.year())
    }

    pub fn is_holiday(&self, date: NaiveDate) -> bool {
        self.dates.contains(&date)
    }

    pub fn years(&self) -> &RangeInclusive<i32> {
        &self.years
    }
}

fn cyclic(value: f64, period: f64) -> (f64, f64) {
    let angle = 2.0 * PI * value / period;
    (angle.sin(), angle.cos())
}

/// Encode hour of day, day of week and day of year as sine/cosine pairs
/// plus a binary holiday-or-weekend flag, one row per hour of `index`
/// evaluated in local time of `zone`.
///
/// Day of year uses a 365-day cycle; Dec 31 of leap years shares the
/// phase of day 365.
pub fn encode_calendar(
    index: &HourlyIndex,
    zone: Tz,
    holidays: &HolidayCalendar,
) -> Result<Matrix, PreprocessError> {
    let mut out = Matrix::zeros(index.len(), CALENDAR_COLUMNS.len());
    for (r, ts) in index.iter().enumerate() {
        let local = zone.from_utc_datetime(&ts.naive_utc());
        let date = local.date_naive();
        if !holidays.covers(date) {
            return Err(PreprocessError::CalendarGap { date });
        }
        let (hs, hc) = cyclic(local.hour() as f64, 24.0);
        let (ds, dc) = cyclic(local.weekday().num_days_from_monday() as f64, 7.0);
        let doy = local.ordinal().min(365);
        let (ys, yc) = cyclic((doy - 1) as f64, 365.0);
        let weekend = matches!(local.weekday(), Weekday::Sat | Weekday::Sun);
        let flag = if weekend || holidays.is_holiday(date) {
            1.0
        } else {
            0.0
        };
        for (c, v) in [hs, hc, ds, dc, ys, yc, flag].into_iter().enumerate() {
            out.set(r, c, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn encode_from(y: i32, m: u32, d: u32, hours: usize) -> Matrix {
        let index = HourlyIndex::new(Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap(), hours).unwrap();
        encode_calendar(&index, Tz::UTC, &HolidayCalendar::weekends_only(2000..=2030)).unwrap()
    }

    #[test]
    fn hour_zero_and_six() {
        let m = encode_from(2021, 6, 1, 24);
        assert_eq!((m.get(0, 0), m.get(0, 1)), (0.0, 1.0));
        assert!((m.get(6, 0) - 1.0).abs() < 1e-15);
        assert!(m.get(6, 1).abs() < 1e-15);
    }

    #[test]
    fn saturday_is_flagged() {
        // 2021-06-05 is a Saturday.
        let m = encode_from(2021, 6, 5, 24);
        assert_eq!(m.get(12, 6), 1.0);
        let m = encode_from(2021, 6, 7, 24);
        assert_eq!(m.get(12, 6), 0.0);
    }

    #[test]
    fn holidays_are_flagged() {
        let day = NaiveDate::from_ymd_opt(2021, 12, 24).unwrap();
        let cal = HolidayCalendar::parse("date,name\n2021-12-24,Christmas Eve".as_bytes()).unwrap();
        let index = HourlyIndex::new(Utc.with_ymd_and_hms(2021, 12, 24, 0, 0, 0).unwrap(), 24).unwrap();
        let m = encode_calendar(&index, Tz::UTC, &cal).unwrap();
        assert!(cal.is_holiday(day));
        assert!(m.column(6).iter().all(|&f| f == 1.0));
    }

    #[test]
    fn uncovered_year_is_a_gap() {
        let cal = HolidayCalendar::weekends_only(2021..=2021);
        let index = HourlyIndex::new(Utc.with_ymd_and_hms(2021, 12, 31, 12, 0, 0).unwrap(), 24).unwrap();
        assert!(matches!(
            encode_calendar(&index, Tz::UTC, &cal),
            Err(PreprocessError::CalendarGap { .. })
        ));
    }

    #[test]
    fn leap_day_shares_last_phase() {
        let a = encode_from(2020, 12, 31, 1);
        let b = encode_from(2021, 12, 31, 1);
        assert_eq!((a.get(0, 4), a.get(0, 5)), (b.get(0, 4), b.get(0, 5)));
    }
}
