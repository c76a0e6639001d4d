//! Central finite-difference gradient checking.
//!
//! Lives in the library (not test code) because the acceptance suite and
//! several module tests compare analytic gradients against this routine.

use ndarray::ArrayD;

/// Numerical gradient of a scalar function by central differences.
pub fn central_diff_grad(
    f: &mut dyn FnMut(&ArrayD<f64>) -> f64,
    x: &ArrayD<f64>,
    step: f64,
) -> ArrayD<f64> {
    let mut grad = ArrayD::zeros(x.raw_dim());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let flat = probe.as_slice_mut().expect("contiguous tensor");
        let orig = flat[idx];
        flat[idx] = orig + step;
        let plus = f(&probe);
        let flat = probe.as_slice_mut().unwrap();
        flat[idx] = orig - step;
        let minus = f(&probe);
        let flat = probe.as_slice_mut().unwrap();
        flat[idx] = orig;
        grad.as_slice_mut().unwrap()[idx] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Worst relative disagreement between two gradients.
///
/// Per element: `|a - n| / (max(|a|, |n|) + 1e-8)`.
pub fn max_rel_err(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / (a.abs().max(n.abs()) + 1e-8))
        .fold(0.0, f64::max)
}

/// True when gradients agree within `rel_tol`, with an absolute floor for
/// entries that are both effectively zero.
pub fn grads_close(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>, rel_tol: f64) -> bool {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic.iter().zip(numeric.iter()).all(|(a, n)| {
        let abs = (a - n).abs();
        abs <= 1e-8 || abs / (a.abs().max(n.abs()) + 1e-8) <= rel_tol
    })
}
