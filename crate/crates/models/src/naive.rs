use crate::ModelError;

/// `forecast[t] = history[n - season + (t mod season)]`.
pub fn seasonal_naive(history: &[f64], season: usize, steps: usize) -> Result<Vec<f64>, ModelError> {
    if season == 0 || history.len() < season {
        return Err(ModelError::SeriesTooShort {
            needed: season.max(1),
            got: history.len(),
        });
    }
    let base = history.len() - season;
    Ok((0..steps).map(|t| history[base + t % season]).collect())
}
