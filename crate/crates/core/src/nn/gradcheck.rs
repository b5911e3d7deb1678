//! Central finite differences for checking hand-derived gradients.

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor in [`relative_error`], so that gradients near zero are
/// compared on an absolute scale instead of amplifying rounding noise.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate, with `h = FD_STEP`.
pub fn central_difference(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + FD_STEP;
            let up = f(&probe);
            probe[i] = x[i] - FD_STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Worst coordinate-wise relative error; infinite on length mismatch or non-finite entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    if analytic.len() != numeric.len() {
        return f64::INFINITY;
    }
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| if a.is_finite() && n.is_finite() { relative_error(a, n) } else { f64::INFINITY })
        .fold(0.0, f64::max)
}
