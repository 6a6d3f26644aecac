//! Central finite differences, the independent oracle the gradient tests
//! compare the tape against.

/// Central-difference gradient of `f` at `x`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe);
        probe[i] = orig - step;
        let down = f(&probe);
        probe[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    out
}

/// Relative error of one pair, with an absolute floor so that gradients
/// near zero are compared absolutely.
pub fn rel_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= 1e-8 {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

/// Worst relative error over two gradient vectors.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| rel_error(a, b))
        .fold(0.0, f64::max)
}
