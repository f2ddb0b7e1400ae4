use crate::{NnError, ParameterStore, Tape, Var};

/// Outcome of a gradient check: the worst scalar and where it was found.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name, flat index, analytic and numeric derivative.
    pub worst: Option<(String, usize, f64, f64)>,
    pub scalars: usize,
}

/// Largest relative error between reverse-mode gradients and central
/// differences over every scalar parameter in `store`.
///
/// `f` must build a scalar on an evaluation tape and be deterministic.
/// The numeric derivative is Richardson-extrapolated from central
/// differences at `eps` and `eps / 2`, so its truncation error is
/// `O(eps^4)`. Relative error is `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(store: &mut ParameterStore, eps: f64, f: F) -> Result<f64, NnError>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var, NnError>,
{
    grad_check_report(store, eps, f).map(|r| r.max_rel_error)
}

/// [`grad_check`] with the location of the worst disagreement.
pub fn grad_check_report<F>(store: &mut ParameterStore, eps: f64, f: F) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var, NnError>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(NnError::InvalidEpsilon(eps));
    }
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, store);
    let eval = |store: &ParameterStore| -> Result<f64, NnError> {
        let mut tape = Tape::new();
        let l = f(&mut tape, store)?;
        Ok(tape.scalar(l))
    };
    let ids: Vec<_> = store.ids().collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        scalars: 0,
    };
    for id in ids {
        let analytic = store.grad(id).data().to_vec();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = store.value(id).data()[i];
            let mut central = |h: f64| -> Result<f64, NnError> {
                store.value_mut(id).data_mut()[i] = orig + h;
                let up = eval(store)?;
                store.value_mut(id).data_mut()[i] = orig - h;
                let down = eval(store)?;
                store.value_mut(id).data_mut()[i] = orig;
                Ok((up - down) / (2.0 * h))
            };
            let coarse = central(eps)?;
            let fine = central(eps / 2.0)?;
            let numeric = (4.0 * fine - coarse) / 3.0;
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.scalars += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((store.name(id).to_string(), i, a, numeric));
            }
        }
    }
    store.zero_grads();
    Ok(report)
}
