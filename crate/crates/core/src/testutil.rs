//! Finite-difference oracles for the unit-level gradient checks.

/// `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let fp = f(&xp);
    xp[i] -= 2.0 * h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

/// Largest relative error between `grad` and central differences over all coordinates.
pub fn max_gradient_error<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], grad: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| relative_error(grad[i], central_difference(&mut f, x, i, 1e-5)))
        .fold(0.0, f64::max)
}
