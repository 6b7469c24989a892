//! Central finite-difference gradient checking.

use super::Tensor;

/// Denominator floor for relative errors. Central differences at `h = 1e-5`
/// on O(1) losses carry roughly 1e-10 of rounding noise, so gradients much
/// smaller than this floor are compared in absolute terms instead.
pub const FD_FLOOR: f64 = 1e-5;

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Numeric gradient of `f` with respect to every entry of every input.
pub fn numeric_gradient(inputs: &[Tensor], h: f64, mut f: impl FnMut(&[Tensor]) -> f64) -> Vec<Tensor> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[t].rows, inputs[t].cols);
        for k in 0..inputs[t].len() {
            let x = inputs[t].data[k];
            work[t].data[k] = x + h;
            let plus = f(&work);
            work[t].data[k] = x - h;
            let minus = f(&work);
            work[t].data[k] = x;
            g.data[k] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Largest relative error between analytic and numeric gradients.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data.iter().zip(&n.data).map(|(&x, &y)| relative_error(x, y, floor)))
        .fold(0.0, f64::max)
}
