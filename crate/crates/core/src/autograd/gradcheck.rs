use super::{Graph, GraphError, ParamId, ParamStore, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over elements of `|a - n| / max(|a| + |n|, 1e-8)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name, element index, analytic and numeric gradient at the
    /// worst element.
    pub worst: Option<(String, usize, f64, f64)>,
}

fn eval<F>(f: &F, store: &ParamStore) -> Result<f64, GraphError>
where
    F: Fn(&mut Graph) -> Result<Var, GraphError>,
{
    let mut g = Graph::new(store);
    let out = f(&mut g)?;
    let v = g.scalar(out)?;
    if !v.is_finite() {
        return Err(GraphError::NonFinite("grad_check objective"));
    }
    Ok(v)
}

/// Compares the analytic gradient of the scalar built by `f` against the
/// five-point central difference with step `eps` for every element of
/// `params`.
pub fn grad_check<F>(f: F, store: &ParamStore, params: &[ParamId], eps: f64) -> Result<GradCheckReport, GraphError>
where
    F: Fn(&mut Graph) -> Result<Var, GraphError>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let out = f(&mut g)?;
        if !g.scalar(out)?.is_finite() {
            return Err(GraphError::NonFinite("grad_check objective"));
        }
        g.backward(out)?
    };
    if !analytic.all_finite() {
        return Err(GraphError::NonFinite("analytic gradient"));
    }

    let mut probe = store.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, worst: None };
    for &id in params {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            let mut at = |delta: f64| {
                probe.get_mut(id).data_mut()[i] = orig + delta;
                eval(&f, &probe)
            };
            let (p1, m1, p2, m2) = (at(eps)?, at(-eps)?, at(2.0 * eps)?, at(-2.0 * eps)?);
            probe.get_mut(id).data_mut()[i] = orig;

            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
            let a = analytic.value(id, i);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), i, a, numeric));
            }
        }
    }
    Ok(report)
}
