//! Household filtering, DST harmonization, flag interpolation and the
//! lower IQR fence.

use std::collections::BTreeMap;

use chrono::{NaiveDate, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::timeseries::{HourlyIndex, Quality, Series};

/// Households below either threshold are dropped.
pub const MIN_MEAN_KWH: f64 = 0.01;
pub const MIN_TOTAL_KWH: f64 = 100.0;

/// Multiplier of the inter-quartile range for the outage fence.
pub const IQR_FENCE: f64 = 1.5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub removed_count: usize,
    pub removed_positions: Vec<usize>,
    pub interpolated_count: usize,
    pub interpolated_positions: Vec<usize>,
    pub households_dropped: Vec<String>,
}

impl CleaningReport {
    pub fn is_consistent(&self) -> bool {
        self.removed_count == self.removed_positions.len()
            && self.interpolated_count == self.interpolated_positions.len()
    }
}

/// Drop households with mean below [`MIN_MEAN_KWH`] or total below [`MIN_TOTAL_KWH`].
pub fn filter_low_consumption(households: Vec<Series>) -> (Vec<Series>, CleaningReport) {
    let mut report = CleaningReport::default();
    let mut kept = Vec::with_capacity(households.len());
    for h in households {
        let finite: Vec<f64> = h.values().iter().copied().filter(|v| v.is_finite()).collect();
        let total: f64 = finite.iter().sum();
        let mean = if finite.is_empty() {
            0.0
        } else {
            total / finite.len() as f64
        };
        if mean < MIN_MEAN_KWH || total < MIN_TOTAL_KWH {
            report.households_dropped.push(h.id().to_string());
        } else {
            kept.push(h);
        }
    }
    (kept, report)
}

/// Reshape a UTC series into exactly 24 values per local calendar day of `zone`.
///
/// The repeated autumn hour keeps its first occurrence; the missing spring
/// hour is the midpoint of its neighbours. The result is indexed by local
/// wall-clock time (stored as naive UTC), so downstream calendar features
/// must treat it as zone `UTC`.
pub fn harmonize_dst(series: &Series, zone: Tz) -> Result<Series, PreprocessError> {
    let mut days: BTreeMap<NaiveDate, Vec<(u32, f64, Quality)>> = BTreeMap::new();
    for (i, ts) in series.index().iter().enumerate() {
        let local = zone.from_utc_datetime(&ts.naive_utc());
        days.entry(local.date_naive()).or_default().push((
            local.hour(),
            series.values()[i],
            series.quality()[i],
        ));
    }
    let Some(first) = days.keys().next().copied() else {
        return Ok(series.clone());
    };

    let mut values = Vec::with_capacity(days.len() * 24);
    let mut quality = Vec::with_capacity(days.len() * 24);
    for (date, hours) in &days {
        match hours.len() {
            24 => {
                values.extend(hours.iter().map(|h| h.1));
                quality.extend(hours.iter().map(|h| h.2));
            }
            25 => {
                let mut previous = None;
                for &(hour, v, q) in hours {
                    if previous == Some(hour) {
                        continue;
                    }
                    previous = Some(hour);
                    values.push(v);
                    quality.push(q);
                }
            }
            23 => {
                for (j, &(hour, v, q)) in hours.iter().enumerate() {
                    if j > 0 && hour == hours[j - 1].0 + 2 {
                        values.push(0.5 * (hours[j - 1].1 + v));
                        quality.push(Quality::Ok);
                    }
                    values.push(v);
                    quality.push(q);
                }
            }
            n => {
                return Err(PreprocessError::MalformedDay {
                    date: *date,
                    hours: n,
                })
            }
        }
        if values.len() % 24 != 0 {
            return Err(PreprocessError::MalformedDay {
                date: *date,
                hours: hours.len(),
            });
        }
    }
    let start = Utc.from_utc_datetime(&first.and_hms_opt(0, 0, 0).expect("midnight"));
    let index = HourlyIndex::new(start, values.len())?;
    Ok(Series::with_quality(
        series.id(),
        series.unit(),
        index,
        values,
        quality,
    )?)
}

/// Fill `bad` positions by linear interpolation between the nearest good
/// neighbours; leading and trailing runs copy the nearest good value.
/// Returns `None` if every position is bad.
fn fill_linear(values: &[f64], bad: &[bool]) -> Option<Vec<f64>> {
    let good: Vec<usize> = (0..values.len()).filter(|&i| !bad[i]).collect();
    let (&first, &last) = (good.first()?, good.last()?);
    let mut out = values.to_vec();
    for v in out.iter_mut().take(first) {
        *v = values[first];
    }
    for v in out.iter_mut().skip(last + 1) {
        *v = values[last];
    }
    for pair in good.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a < 2 {
            continue;
        }
        let span = (b - a) as f64;
        for (i, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let w = (i - a) as f64 / span;
            *slot = values[a] + w * (values[b] - values[a]);
        }
    }
    Some(out)
}

/// Replace every non-ok value by linear interpolation and mark it ok.
pub fn interpolate_flagged(series: &Series) -> Result<(Series, CleaningReport), PreprocessError> {
    let bad: Vec<bool> = series
        .quality()
        .iter()
        .zip(series.values())
        .map(|(q, v)| !q.is_ok() || !v.is_finite())
        .collect();
    let positions: Vec<usize> = (0..bad.len()).filter(|&i| bad[i]).collect();
    if positions.is_empty() {
        return Ok((series.clone(), CleaningReport::default()));
    }
    let values = fill_linear(series.values(), &bad).ok_or_else(|| PreprocessError::AllBad {
        id: series.id().to_string(),
    })?;
    let report = CleaningReport {
        interpolated_count: positions.len(),
        interpolated_positions: positions,
        ..Default::default()
    };
    let cleaned = series.replace_values(values, vec![Quality::Ok; series.len()])?;
    Ok((cleaned, report))
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Lower outage fence `q25 - 1.5 * (q75 - q25)` over the finite values.
pub fn iqr_threshold(values: &[f64]) -> Option<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    let q25 = quantile_type7(&sorted, 0.25);
    let q75 = quantile_type7(&sorted, 0.75);
    Some(q25 - IQR_FENCE * (q75 - q25))
}

/// Remove values strictly below the lower IQR fence and interpolate them.
///
/// The fence is one-sided: high values are never touched.
pub fn iqr_clean(series: &Series) -> Result<(Series, CleaningReport), PreprocessError> {
    if series.len() < 4 {
        return Err(PreprocessError::TooShort {
            id: series.id().to_string(),
            len: series.len(),
            min: 4,
        });
    }
    let threshold = iqr_threshold(series.values()).ok_or_else(|| PreprocessError::AllBad {
        id: series.id().to_string(),
    })?;
    let bad: Vec<bool> = series.values().iter().map(|&v| v < threshold).collect();
    let positions: Vec<usize> = (0..bad.len()).filter(|&i| bad[i]).collect();
    if positions.is_empty() {
        return Ok((series.clone(), CleaningReport::default()));
    }
    let values = fill_linear(series.values(), &bad).expect("fence keeps the median");
    let report = CleaningReport {
        removed_count: positions.len(),
        removed_positions: positions.clone(),
        interpolated_count: positions.len(),
        interpolated_positions: positions,
        ..Default::default()
    };
    let cleaned = series.replace_values(values, series.quality().to_vec())?;
    Ok((cleaned, report))
}
