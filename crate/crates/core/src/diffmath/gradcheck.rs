use alloc::string::String;
use alloc::vec::Vec;

use super::{Matrix, ParamStore, Tape, Tensor};
use crate::{Error, Result};

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Worst coordinate found by a finite-difference sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub param: String,
    pub index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Runs `f`, backpropagates, and compares every parameter coordinate with a
/// central difference `(f(p+ε) − f(p−ε)) / 2ε`.
pub fn finite_difference_check<'g, F>(store: &mut ParamStore, eps: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(Tape<'g>, Tensor)>,
{
    validate_eps(eps)?;
    let (tape, loss) = f(store)?;
    tape.backward(loss, store)?;
    let analytic: Vec<Matrix> = store
        .iter()
        .map(|p| p.grad.clone().expect("backward fills every gradient"))
        .collect();
    store.clear_grads();
    compare_gradients(store, &analytic, eps, f)
}

/// Compares caller-supplied gradients (one matrix per parameter, in store
/// order) against central differences of `f`.
pub fn compare_gradients<'g, F>(
    store: &mut ParamStore,
    analytic: &[Matrix],
    eps: f64,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(Tape<'g>, Tensor)>,
{
    validate_eps(eps)?;
    if analytic.len() != store.len() {
        return Err(Error::ShapeMismatch {
            op: "compare_gradients",
            lhs: (analytic.len(), 1),
            rhs: (store.len(), 1),
        });
    }
    let mut eval = |s: &ParamStore| -> Result<f64> {
        let (tape, loss) = f(s)?;
        Ok(tape.scalar(loss))
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        param: String::new(),
        index: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    for id in 0..store.len() {
        let (rows, cols) = store.by_id(id).value.shape();
        if analytic[id].shape() != (rows, cols) {
            return Err(Error::ShapeMismatch {
                op: "compare_gradients",
                lhs: analytic[id].shape(),
                rhs: (rows, cols),
            });
        }
        for i in 0..rows {
            for j in 0..cols {
                let orig = store.by_id(id).value.get(i, j);
                store.by_id_mut(id).value.set(i, j, orig + eps);
                let up = eval(store);
                store.by_id_mut(id).value.set(i, j, orig - eps);
                let down = eval(store);
                store.by_id_mut(id).value.set(i, j, orig);
                let numeric = (up? - down?) / (2.0 * eps);
                let a = analytic[id].get(i, j);
                let err = relative_error(a, numeric);
                report.coordinates += 1;
                if err > report.max_rel_error || !err.is_finite() {
                    report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                    report.param = store.by_id(id).name.clone();
                    report.index = (i, j);
                    report.analytic = a;
                    report.numeric = numeric;
                }
            }
        }
    }
    Ok(report)
}

fn validate_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(eps))
    }
}
