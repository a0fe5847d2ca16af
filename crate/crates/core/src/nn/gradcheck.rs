//! Central finite differences, the reference every analytic gradient is
//! checked against.

/// `(f(θ+εe_i) − f(θ−εe_i)) / 2ε` for every coordinate.
pub fn finite_difference_grad(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], epsilon: f64) -> Vec<f64> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + epsilon;
            let plus = f(&probe);
            probe[i] = orig - epsilon;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * epsilon)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let g = finite_difference_grad(|t| t[0] * t[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_difference_grad(|_| 4.2, &[1.0, -2.0, 3.0], 1e-5);
        assert_eq!(g, vec![0.0; 3]);
    }
}
