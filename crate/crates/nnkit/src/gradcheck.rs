//! Central-difference gradient checking.

use crate::Parameters;

/// `|a - n| / max(1e-12, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Compares the analytic gradient of `f` at `params` against central
/// differences with step `h` and returns the maximum relative error over
/// all coordinates.
///
/// `f` returns the scalar value and its analytic gradient.
pub fn grad_check<F>(mut f: F, params: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length mismatch");
    let mut x = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x).0;
        x[i] = orig - h;
        let minus = f(&x).0;
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// [`grad_check`] over every tensor of a [`Parameters`] value. The loss
/// closure returns gradients in the same parameter layout.
pub fn grad_check_params<P, F>(params: &P, mut loss: F, h: f64) -> f64
where
    P: Parameters + Clone,
    F: FnMut(&P) -> (f64, P),
{
    let mut scratch = params.clone();
    grad_check(
        |flat| {
            scratch.assign_flat(flat);
            let (v, g) = loss(&scratch);
            (v, g.flatten())
        },
        &params.flatten(),
        h,
    )
}
