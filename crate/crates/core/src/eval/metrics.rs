use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("actual has {actual} values, forecast has {forecast}")]
    LengthMismatch { actual: usize, forecast: usize },
    #[error("metric needs at least one value")]
    Empty,
    #[error("MAPE undefined: actual value at position {position} is zero")]
    ZeroActual { position: usize },
}

fn check(y: &[f64], p: &[f64]) -> Result<(), MetricError> {
    if y.len() != p.len() {
        return Err(MetricError::LengthMismatch {
            actual: y.len(),
            forecast: p.len(),
        });
    }
    if y.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(y: &[f64], p: &[f64]) -> Result<f64, MetricError> {
    check(y, p)?;
    let mse = y.iter().zip(p).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

/// Mean absolute percentage error, in percent.
pub fn mape(y: &[f64], p: &[f64]) -> Result<f64, MetricError> {
    check(y, p)?;
    if let Some(position) = y.iter().position(|&a| a == 0.0) {
        return Err(MetricError::ZeroActual { position });
    }
    let sum: f64 = y.iter().zip(p).map(|(a, b)| (b - a).abs() / a.abs()).sum();
    Ok(100.0 * sum / y.len() as f64)
}

/// Symmetric MAPE with half-sum denominator, in percent (range 0..=200).
/// Terms with `y = p = 0` contribute zero.
pub fn smape(y: &[f64], p: &[f64]) -> Result<f64, MetricError> {
    check(y, p)?;
    let sum: f64 = y
        .iter()
        .zip(p)
        .map(|(a, b)| {
            let denom = (a.abs() + b.abs()) / 2.0;
            if denom == 0.0 {
                0.0
            } else {
                (b - a).abs() / denom
            }
        })
        .sum();
    Ok(100.0 * sum / y.len() as f64)
}
