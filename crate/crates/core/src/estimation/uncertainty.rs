//! First-order (delta-method) uncertainty propagation.

use nalgebra::{DMatrix, DVector};

/// Coverage factor for reported expanded uncertainties (≈95 % for a Gaussian).
pub const COVERAGE_FACTOR: f64 = 2.0;

/// A value with its one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Measured { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Measured { value, sigma: 0.0 }
    }

    /// Expanded interval `value ± k σ`, with the lower end clipped at `floor`
    /// when given.
    pub fn interval(&self, floor: Option<f64>) -> (f64, f64) {
        let half = COVERAGE_FACTOR * self.sigma;
        let lo = self.value - half;
        let lo = floor.map_or(lo, |f| lo.max(f));
        (lo, self.value + half)
    }

    pub fn contains(&self, truth: f64) -> bool {
        (truth - self.value).abs() <= COVERAGE_FACTOR * self.sigma
    }
}

/// Gradient of `f` at `x` by central differences with per-coordinate steps
/// scaled to each coordinate's magnitude and uncertainty.
pub fn numerical_gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], scales: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = 1e-6 * scales[k].abs().max(x[k].abs() * 1e-3).max(1e-12);
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Variance of `f(x)` given the covariance of `x`, to first order.
pub fn propagate(f: &impl Fn(&[f64]) -> f64, x: &[f64], covariance: &DMatrix<f64>) -> f64 {
    let scales: Vec<f64> = (0..x.len()).map(|k| covariance[(k, k)].max(0.0).sqrt()).collect();
    let g = DVector::from_vec(numerical_gradient(f, x, &scales));
    (g.transpose() * covariance * &g)[(0, 0)].max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_propagation_is_exact() {
        let f = |x: &[f64]| 2.0 * x[0] - 3.0 * x[1];
        let cov = DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let var = propagate(&f, &[1.0, 2.0], &cov);
        let expected = 4.0 * 0.04 + 9.0 * 0.09 - 2.0 * 2.0 * 3.0 * 0.01;
        assert!((var - expected).abs() < 1e-9);
    }

    #[test]
    fn ratio_relative_errors_add_in_quadrature() {
        let f = |x: &[f64]| x[0] / x[1];
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.03f64.powi(2), 0.04f64.powi(2)]));
        let var = propagate(&f, &[1.0, 1.0], &cov);
        assert!((var.sqrt() - 0.05).abs() < 1e-6);
    }

    #[test]
    fn interval_clips_at_floor() {
        let m = Measured::new(0.02, 0.04);
        let (lo, hi) = m.interval(Some(0.0));
        assert_eq!(lo, 0.0);
        assert!((hi - 0.10).abs() < 1e-12);
        assert!(m.contains(0.09) && !m.contains(0.11));
    }
}
