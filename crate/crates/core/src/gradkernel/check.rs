use super::{GradError, Graph, NodeId, ParamStore};

/// Outcome of a central finite-difference gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates_checked: usize,
}

/// Compares reverse-mode gradients of `loss` against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε`, coordinate by coordinate over every parameter.
///
/// `loss` must build its graph deterministically from the store. Parameter
/// values are restored before returning; accumulated gradients are reset.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    eps: f64,
    mut loss: F,
) -> Result<GradCheckReport, GradError>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<NodeId, GradError>,
{
    fn eval<F>(loss: &mut F, store: &ParamStore) -> Result<f64, GradError>
    where
        F: FnMut(&ParamStore, &mut Graph) -> Result<NodeId, GradError>,
    {
        let mut g = Graph::new();
        let out = loss(store, &mut g)?;
        let shape = g.value(out).shape();
        g.value(out)
            .item()
            .ok_or(GradError::NonScalarLoss { shape })
    }

    store.zero_grad();
    {
        let mut g = Graph::new();
        let out = loss(store, &mut g)?;
        g.backward(out, store)?;
    }
    let analytic: Vec<Vec<f64>> = store.iter().map(|(_, p)| p.grad.data().to_vec()).collect();
    store.zero_grad();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates_checked: 0,
    };
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + eps;
            let plus = eval(&mut loss, store);
            store.get_mut(id).value.data_mut()[k] = orig - eps;
            let minus = eval(&mut loss, store);
            store.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let a = analytic[pi][k];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.coordinates_checked += 1;
            if report.coordinates_checked == 1 || rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_parameter = store.get(id).name.clone();
                report.worst_index = k;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
