//! Finite-difference verification of reverse-mode gradients.

use super::tape::{DiffTensor, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst component-wise relative discrepancy.
    pub max_rel_error: f64,
    /// Component where it occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub components_checked: usize,
}

/// Compares the reverse-mode gradient of a scalar map with central differences.
///
/// `f` builds the computation on a fresh tape from a leaf holding `point`.
/// The relative error of component `i` is `|a − n| / max(|a|, |n|, floor)`,
/// with `floor = 1e-8 · max_i |a_i|` so that components whose gradient is
/// numerically zero are compared on the scale of the whole gradient.
/// `indices` restricts the check to a subset of components (all when `None`).
pub fn grad_check_indices<T, F>(
    f: F,
    point: &Tensor<T>,
    eps: f64,
    indices: Option<&[usize]>,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, DiffTensor) -> Result<DiffTensor>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("grad_check eps must be positive, got {eps}")));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone(), true);
    let y = f(&mut tape, x)?;
    let grads = tape.backward(y)?;
    let analytic = grads.get(x).cloned().unwrap_or_else(|| Tensor::zeros(point.shape()));

    let eval = |p: Tensor<T>| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(p, false);
        let y = f(&mut tape, x)?;
        let v = tape.value(y).data()[0].to_f64_lossy();
        if !v.is_finite() {
            return Err(Error::NonFinite { context: "grad_check probe".into() });
        }
        Ok(v)
    };

    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let scale = analytic.max_abs().to_f64_lossy();
    let floor = (1e-8 * scale).max(f64::MIN_POSITIVE);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        components_checked: idx.len(),
    };
    for &i in idx {
        let mut plus = point.clone();
        plus.data_mut()[i] += T::lit(eps);
        let mut minus = point.clone();
        minus.data_mut()[i] -= T::lit(eps);
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i].to_f64_lossy();
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if err > report.max_rel_error {
            report = GradCheckReport { max_rel_error: err, worst_index: i, analytic: a, numeric, ..report };
        }
    }
    Ok(report)
}

/// Worst relative discrepancy over every component of `point`.
pub fn grad_check<T, F>(f: F, point: &Tensor<T>, eps: f64) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, DiffTensor) -> Result<DiffTensor>,
{
    grad_check_indices(f, point, eps, None).map(|r| r.max_rel_error)
}
