use super::{Graph, ParamStore, Var};

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const MAGNITUDE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, MAGNITUDE_FLOOR)`.
    pub worst_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.worst_rel_error < tolerance
    }
}

/// Compares backpropagated gradients of a scalar graph against central
/// finite differences with step `h`, for every parameter value in `store`.
pub fn grad_check<F>(store: &ParamStore<f64>, build: F, h: f64) -> GradReport
where
    F: for<'p> Fn(&mut Graph<'p, f64>, &'p ParamStore<f64>) -> Var,
{
    let analytic = {
        let mut g = Graph::new();
        let out = build(&mut g, store);
        g.backward(out)
    };
    let eval = |s: &ParamStore<f64>| -> f64 {
        let mut g = Graph::new();
        let out = build(&mut g, s);
        g.value(out)[0]
    };
    let mut report = GradReport {
        worst_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let mut probe = store.clone();
    let names: Vec<String> = store.names().map(String::from).collect();
    for name in names {
        let n = store.get(&name).unwrap().len();
        for i in 0..n {
            let orig = store.get(&name).unwrap().data[i];
            probe.get_mut(&name).unwrap().data[i] = orig + h;
            let up = eval(&probe);
            probe.get_mut(&name).unwrap().data[i] = orig - h;
            let down = eval(&probe);
            probe.get_mut(&name).unwrap().data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(&name).map_or(0.0, |t| t.data[i]);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
            report.checked += 1;
            if err > report.worst_rel_error || report.worst_param.is_empty() {
                report.worst_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }
    report
}
