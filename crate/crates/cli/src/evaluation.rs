//! Backtest a trained model over the complete days (or weeks) of a test span.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono_tz::Tz;
use gridcast_core::eval::{evaluate_windows, EvalLevel, EvalReport, ReportLabels};
use gridcast_core::preprocess::{CovariateFrame, Horizon};
use gridcast_core::{
    aggregate_bottom_up, enumerate_eval_windows, EvalWindow, HourlyIndex, Series, Unit, WindowKind,
};
use gridcast_models::{ModelError, TrainedModel};

use crate::CliError;

/// Forecasts of one `(series, origin chunk)` task.
type ChunkResult = Result<Vec<Vec<f64>>, ModelError>;

pub fn window_kind(model: &TrainedModel) -> Result<WindowKind, CliError> {
    match model.horizon() {
        24 => Ok(WindowKind::Day),
        168 => Ok(WindowKind::Week),
        h => Err(CliError::invalid(format!(
            "model horizon {h} is neither day-ahead (24) nor week-ahead (168)"
        ))),
    }
}

/// Substation models carry the grid node id as static input.
pub fn is_substation_model(model: &TrainedModel) -> bool {
    model.schema.count(Horizon::Static) > 0
}

fn truth(frame: &CovariateFrame) -> Result<Series, CliError> {
    Ok(Series::new(
        frame.series_id.clone(),
        Unit::Kwh,
        frame.index,
        frame.target(),
    )?)
}

/// Forecast every origin of every series; `threads` workers split the
/// work in fixed chunks, so results do not depend on scheduling.
pub fn forecast_all(
    model: &TrainedModel,
    frames: &[CovariateFrame],
    origins: &[usize],
    threads: usize,
) -> Result<Vec<Vec<Vec<f64>>>, ModelError> {
    let threads = threads.max(1);
    let chunk = origins.len().div_ceil(threads).max(1);
    let tasks: Vec<(usize, usize)> = (0..frames.len())
        .flat_map(|s| (0..origins.len()).step_by(chunk).map(move |start| (s, start)))
        .collect();
    let results: Mutex<Vec<Option<ChunkResult>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let t = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(s, start)) = tasks.get(t) else { break };
        let end = (start + chunk).min(origins.len());
        let out = model.forecast_many(&frames[s], s, &origins[start..end]);
        results.lock().expect("no poisoned worker")[t] = Some(out);
    };
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..threads.min(tasks.len()) {
                scope.spawn(work);
            }
        });
    }
    let mut out = vec![Vec::with_capacity(origins.len()); frames.len()];
    for (&(s, _), r) in tasks
        .iter()
        .zip(results.into_inner().expect("no poisoned worker"))
    {
        out[s].extend(r.expect("every task ran")?);
    }
    Ok(out)
}

/// One report per evaluated target: the grid (direct or summed from
/// substations with `aggregate`) or each substation. Labels name the
/// report: empty for grid-level reports, the series id otherwise.
pub fn evaluate_model(
    model: &TrainedModel,
    frames: &[CovariateFrame],
    train_len: usize,
    zone: Tz,
    aggregate: bool,
    dataset: &str,
    threads: usize,
) -> Result<Vec<(String, EvalReport)>, CliError> {
    let kind = window_kind(model)?;
    let first = frames
        .first()
        .ok_or_else(|| CliError::invalid("dataset has no series"))?;
    if first.schema != model.schema {
        return Err(ModelError::SchemaMismatch {
            expected: Box::new(model.schema.clone()),
            found: Box::new(first.schema.clone()),
        }
        .into());
    }
    if frames.len() != model.series.len()
        || frames.iter().zip(&model.series).any(|(f, s)| f.series_id != s.id)
    {
        return Err(CliError::invalid(format!(
            "dataset series {:?} differ from the trained series {:?}",
            frames.iter().map(|f| f.series_id.as_str()).collect::<Vec<_>>(),
            model.series.iter().map(|s| s.id.as_str()).collect::<Vec<_>>()
        )));
    }
    let n = first.len();
    if train_len >= n {
        return Err(CliError::invalid("test span is empty"));
    }
    let test: HourlyIndex = first.index.slice(train_len, n - train_len);
    let windows = enumerate_eval_windows(&test, train_len, model.input_window(), kind, zone);
    if windows.is_empty() {
        return Err(CliError::invalid(format!(
            "test span holds no complete {} window",
            kind.as_str()
        )));
    }
    let origins: Vec<usize> = windows
        .iter()
        .map(|w| {
            first
                .index
                .position(w.target.start)
                .expect("window lies inside the series")
        })
        .collect();
    let forecasts = forecast_all(model, frames, &origins, threads)?;
    let position = |w: &EvalWindow| windows.iter().position(|x| x == w).expect("known window");
    let labels = |level| ReportLabels {
        model: model.name().to_string(),
        dataset: dataset.to_string(),
        level,
    };

    let substation = is_substation_model(model);
    if !substation || aggregate {
        let (level, truth) = if substation {
            let parts = frames.iter().map(truth).collect::<Result<Vec<_>, _>>()?;
            (EvalLevel::Hierarchical, aggregate_bottom_up(&parts)?)
        } else {
            (EvalLevel::Grid, truth(first)?)
        };
        let report = evaluate_windows(&windows, &truth, labels(level), |w| {
            let i = position(w);
            let parts = forecasts
                .iter()
                .map(|f| {
                    Series::new(
                        "part",
                        Unit::Kwh,
                        HourlyIndex::new(w.target.start, f[i].len())?,
                        f[i].clone(),
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok::<_, gridcast_core::SeriesError>(aggregate_bottom_up(&parts)?.values().to_vec())
        })?;
        return Ok(vec![(String::new(), report)]);
    }
    frames
        .iter()
        .enumerate()
        .map(|(s, frame)| {
            let report = evaluate_windows(&windows, &truth(frame)?, labels(EvalLevel::Substation), |w| {
                Ok::<_, CliError>(forecasts[s][position(w)].clone())
            })?;
            Ok((frame.series_id.clone(), report))
        })
        .collect()
}
