//! Theoretical quantities: tail constants, norming sequences, spectral atoms,
//! the extremal functional `eta` and the extremal index `theta`.

mod eta;
mod garch;
mod quadrature;
mod spectral;

pub use eta::{eta_tkm, ma_extremal_index, EtaEntry, EtaReport, EtaValue, SweepRow, DEFAULT_SWEEP};
pub use garch::{
    garch_eta, garch_eta_spectral, garch_eta_sweep, garch_tail_index, garch_tail_index_mc, GarchExponent,
    GarchIndex, GarchIndexMc,
};
pub use quadrature::GaussianExpectation;
pub use spectral::{ma_spectral_atoms, Atom, SpectralAtoms};

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::parallel::{mean_se, sum_moments};
use crate::rng::StreamKey;
use crate::sim::KernelPsi;
use crate::tailmodels::VolModelY;

/// `||psi||_alpha^alpha = sum_u |psi_u|^alpha`.
pub fn psi_alpha_norm(kernel: &KernelPsi, alpha: f64) -> f64 {
    kernel.coefficients().iter().map(|(_, c)| c.abs().powf(alpha)).sum()
}

/// `sum_u (p_xi (psi_u)_+^alpha + (1 - p_xi) (psi_u)_-^alpha)`, the limit of
/// `P(Z_0 > x) / P(|xi_0| > x)`.
pub fn ma_tail_constant(kernel: &KernelPsi, alpha: f64, p_xi: f64) -> f64 {
    kernel
        .coefficients()
        .iter()
        .map(|(_, c)| {
            if *c > 0.0 {
                p_xi * c.powf(alpha)
            } else {
                (1.0 - p_xi) * (-c).powf(alpha)
            }
        })
        .sum()
}

/// Tail balance `p` of the moving average.
pub fn ma_tail_balance_p(kernel: &KernelPsi, alpha: f64, p_xi: f64) -> f64 {
    ma_tail_constant(kernel, alpha, p_xi) / psi_alpha_norm(kernel, alpha)
}

/// `a_n = (tail_constant * |D_n|)^(1 / index)`.
pub fn norming_a_n(tail_constant: f64, index: f64, domain_size: f64) -> Result<f64> {
    for (name, v) in [
        ("tail_constant", tail_constant),
        ("index", index),
        ("domain_size", domain_size),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be positive, got {v}")));
        }
    }
    Ok((tail_constant * domain_size).powf(1.0 / index))
}

/// Norming rule `a_n = (c |D_n|)^(1 / index)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormingSequence {
    pub tail_constant: f64,
    pub index: f64,
}

impl NormingSequence {
    pub fn new(tail_constant: f64, index: f64) -> Result<Self> {
        norming_a_n(tail_constant, index, 1.0)?;
        Ok(NormingSequence { tail_constant, index })
    }

    /// Norming for a moving average with exact Pareto noise.
    pub fn moving_average(kernel: &KernelPsi, alpha: f64, p_xi: f64) -> Result<Self> {
        NormingSequence::new(ma_tail_constant(kernel, alpha, p_xi), alpha)
    }

    pub fn a_n(&self, domain_size: usize) -> f64 {
        (self.tail_constant * domain_size as f64).powf(1.0 / self.index)
    }

    /// `|D_n| * c * a^(-index)`, equal to 1 at `a = a_n`.
    pub fn expected_exceedances(&self, domain_size: usize, level: f64) -> f64 {
        domain_size as f64 * self.tail_constant * level.powf(-self.index)
    }
}

/// `E(Y_0)_+^alpha + ((1 - p) / p) E(Y_0)_-^alpha` in closed form.
pub fn breiman_constant(y: &VolModelY, alpha: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid("p", format!("tail balance must lie in (0, 1], got {p}")));
    }
    let (pos, neg) = y.part_moments(alpha);
    Ok(pos + (1.0 - p) / p * neg)
}

/// Monte Carlo estimate of [`breiman_constant`] with its standard error.
pub fn breiman_constant_mc(y: &VolModelY, alpha: f64, p: f64, samples: u64, key: StreamKey) -> Result<(f64, f64)> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid("p", format!("tail balance must lie in (0, 1], got {p}")));
    }
    if samples < 2 {
        return Err(invalid("samples", "need at least 2"));
    }
    let ratio = (1.0 - p) / p;
    let (s, s2) = sum_moments(samples, 4096, |i| {
        let k = key.replication(i);
        let y0 = y.draw_regime(k).unwrap_or(1.0) * y.base_at(k, &[0]);
        if y0 >= 0.0 {
            y0.powf(alpha)
        } else {
            ratio * (-y0).powf(alpha)
        }
    });
    Ok(mean_se(s, s2, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::STREAM_ORACLE;
    use crate::tailmodels::YKind;
    use approx::assert_relative_eq;

    fn kernel(v: &[f64]) -> KernelPsi {
        KernelPsi::causal_1d(v).unwrap()
    }

    #[test]
    fn kernel_norms_and_tail_constants() {
        let k = kernel(&[1.0, 0.5]);
        assert_relative_eq!(psi_alpha_norm(&k, 2.0), 1.25);
        assert_relative_eq!(psi_alpha_norm(&KernelPsi::identity(1), 2.0), 1.0);
        let doubled = k.scaled(2.0).unwrap();
        assert_relative_eq!(psi_alpha_norm(&doubled, 1.7), 2f64.powf(1.7) * psi_alpha_norm(&k, 1.7));
        assert_relative_eq!(ma_tail_constant(&k, 2.0, 1.0), 1.25);
        let pm = kernel(&[1.0, -1.0]);
        assert_relative_eq!(ma_tail_constant(&pm, 2.0, 0.5), 1.0);
        assert_relative_eq!(ma_tail_balance_p(&pm, 2.0, 1.0), 0.5);
        assert_relative_eq!(ma_tail_balance_p(&k, 2.0, 1.0), 1.0);
        let odd = kernel(&[0.3, -1.2, 0.7]);
        assert_relative_eq!(ma_tail_balance_p(&odd, 1.3, 0.5), 0.5);
    }

    #[test]
    fn norming_constants() {
        assert_relative_eq!(norming_a_n(1.25, 2.0, 1e4).unwrap(), 12_500f64.sqrt());
        assert_relative_eq!(norming_a_n(1.0, 2.0, 100.0).unwrap(), 10.0);
        let n = NormingSequence::new(1.25, 2.0).unwrap();
        assert_relative_eq!(n.a_n(2000) / n.a_n(1000), 2f64.sqrt());
        assert_relative_eq!(n.expected_exceedances(777, n.a_n(777)), 1.0, max_relative = 1e-12);
        assert!(norming_a_n(0.0, 2.0, 10.0).is_err());
    }

    #[test]
    fn breiman_constants() {
        assert_eq!(breiman_constant(&VolModelY::constant(1.0), 2.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(breiman_constant(&VolModelY::constant(3.0), 1.5, 0.3).unwrap(), 3f64.powf(1.5));
        let ln = VolModelY::new(YKind::IidLognormal { mu: 0.0, sigma: 0.5 }, 3.0).unwrap();
        assert_relative_eq!(breiman_constant(&ln, 2.0, 1.0).unwrap(), 0.5f64.exp(), max_relative = 1e-12);
        let neg = VolModelY::constant(-2.0);
        assert_relative_eq!(breiman_constant(&neg, 2.0, 0.25).unwrap(), 3.0 * 4.0);
    }

    #[test]
    fn breiman_monte_carlo_matches_closed_form() {
        let ln = VolModelY::new(YKind::IidLognormal { mu: 0.0, sigma: 0.5 }, 3.0).unwrap();
        let (est, se) = breiman_constant_mc(&ln, 2.0, 1.0, 200_000, StreamKey::new(3, STREAM_ORACLE)).unwrap();
        assert!((est - 0.5f64.exp()).abs() < 4.0 * se, "{est} ± {se}");
        let regime = VolModelY::new(
            YKind::Regime {
                scales: vec![1.0, 2.0],
                probs: vec![0.5, 0.5],
                base: Box::new(YKind::IidAbsGaussian { sigma: 1.0 }),
            },
            3.0,
        )
        .unwrap();
        let exact = breiman_constant(&regime, 2.0, 1.0).unwrap();
        assert_relative_eq!(exact, 2.5, max_relative = 1e-12);
        let (est, se) = breiman_constant_mc(&regime, 2.0, 1.0, 200_000, StreamKey::new(4, STREAM_ORACLE)).unwrap();
        assert!((est - exact).abs() < 4.0 * se, "{est} ± {se}");
    }
}
