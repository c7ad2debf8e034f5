//! Central-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over all scalar parameters of |analytic − numeric| / max(1, |numeric|)
    pub max_rel_error: f64,
    /// (parameter name, flat index) where the maximum was hit
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

fn eval<F>(f: &F, store: &ParamStore) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    g.value(out).item()
}

/// Compares the tape gradient of the scalar `f` at `store` against central
/// differences with step `eps`, over every scalar parameter.
pub fn grad_check<F>(store: &ParamStore, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    if g.value(out).len() != 1 {
        return Err(Error::NotScalar(g.value(out).shape().to_vec()));
    }
    let analytic = g.backward(out)?.params(&g, store);
    drop(g);

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in store.ids() {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let plus = eval(&f, &probe)?;
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let minus = eval(&f, &probe)?;
            probe.get_mut(id).data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic[id.index()].data()[i] - numeric).abs() / numeric.abs().max(1.0);
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_string(), i));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
