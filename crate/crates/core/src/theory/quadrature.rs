use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;

/// Expectations `E f(xi)` for standard Gaussian `xi` by Gauss–Hermite
/// quadrature with the change of variables `xi = sqrt(2) x`.
#[derive(Debug, Clone)]
pub struct GaussianExpectation {
    nodes: Vec<(f64, f64)>,
}

impl GaussianExpectation {
    pub fn new(degree: usize) -> Self {
        let rule = GaussHermite::new(NonZeroUsize::new(degree.max(1)).expect("positive"));
        let scale = std::f64::consts::PI.sqrt().recip();
        let nodes = rule
            .nodes()
            .zip(rule.weights())
            .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w * scale))
            .collect();
        GaussianExpectation { nodes }
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().map(|&(x, w)| w * f(x)).sum()
    }
}

impl Default for GaussianExpectation {
    fn default() -> Self {
        GaussianExpectation::new(128)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let q = GaussianExpectation::default();
        assert!((q.expect(|_| 1.0) - 1.0).abs() < 1e-12);
        assert!((q.expect(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((q.expect(|x| x.powi(4)) - 3.0).abs() < 1e-11);
        assert!((q.expect(|x| x.powi(8)) - 105.0).abs() < 1e-9);
        assert!((q.expect(f64::cos) - (-0.5f64).exp()).abs() < 1e-13);
    }
}
