//! Central finite-difference gradient checking.

/// Compares an analytic gradient against central differences of a scalar
/// function, coordinate by coordinate.
///
/// Returns the maximum over coordinates of
/// |analytic − numeric| / max(1e-8, |analytic| + |numeric|).
/// Vector-valued maps are expected to be reduced to a scalar by the
/// caller (typically through a fixed random projection).
pub fn finite_diff_check(
    f: &dyn Fn(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    epsilon: f64,
) -> f64 {
    assert!(epsilon > 0.0, "epsilon must be positive");
    assert_eq!(
        point.len(),
        analytic.len(),
        "analytic gradient length must match the point"
    );
    let mut worst = 0.0f64;
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let plus = f(&probe);
        probe[i] = orig - epsilon;
        let minus = f(&probe);
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact() {
        let w = [2.0, -3.0, 0.5, 7.0];
        let f = |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let point = [0.3, -1.2, 4.0, 0.0];
        let err = finite_diff_check(&f, &point, &w, 1e-5);
        assert!(err < 1e-10, "linear map rel err {err}");
    }

    #[test]
    fn softmax_cross_entropy_toy() {
        // f(x) = −log softmax(x)[0]; ∇f = p − e0.
        let f = |x: &[f64]| {
            let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = x.iter().map(|v| (v - m).exp()).sum();
            -(x[0] - m - z.ln())
        };
        let point = [0.2, -0.7, 1.3];
        let m = point.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = point.iter().map(|v| (v - m).exp()).sum();
        let mut grad: Vec<f64> = point.iter().map(|v| (v - m).exp() / z).collect();
        grad[0] -= 1.0;
        let err = finite_diff_check(&f, &point, &grad, 1e-5);
        assert!(err < 1e-6, "softmax-CE rel err {err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let f = |x: &[f64]| x[0] * x[0];
        let err = finite_diff_check(&f, &[3.0], &[3.0], 1e-5);
        assert!(err > 0.3);
    }
}
