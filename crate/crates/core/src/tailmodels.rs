//! Heavy-tailed noise and multiplier-field models.
//!
//! The noise law is a two-sided Pareto distribution on `{|x| >= 1}`: with
//! probability `p_xi` a draw is `+P`, otherwise `-P`, where `P >= 1` has
//! `P(P > x) = x^(-alpha)`. Tails are therefore exact power laws and the
//! norming constants have closed forms.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticeBox;
use crate::rng::{KeyedRng, StreamKey, STREAM_REGIME};
use crate::sim::{FieldMeta, FieldSample, FieldSource};

/// Two-sided Pareto noise with index `alpha` and right-tail weight `p_xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailModel {
    alpha: f64,
    p_xi: f64,
}

impl TailModel {
    pub fn new(alpha: f64, p_xi: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be positive, got {alpha}")));
        }
        if !(p_xi > 0.0 && p_xi <= 1.0) {
            return Err(invalid("p_xi", format!("must lie in (0, 1], got {p_xi}")));
        }
        Ok(TailModel { alpha, p_xi })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p_xi(&self) -> f64 {
        self.p_xi
    }

    /// `(P(xi > x), P(xi < -x))` for `x >= 1`.
    pub fn tail_prob(&self, x: f64) -> Result<(f64, f64)> {
        if !(x >= 1.0) {
            return Err(Error::Domain(format!(
                "tail probabilities are defined on x >= 1, got {x}"
            )));
        }
        let base = x.powf(-self.alpha);
        Ok((self.p_xi * base, (1.0 - self.p_xi) * base))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -1.0 {
            (1.0 - self.p_xi) * (-x).powf(-self.alpha)
        } else if x < 1.0 {
            1.0 - self.p_xi
        } else {
            1.0 - self.p_xi * x.powf(-self.alpha)
        }
    }

    /// Inverse of [`cdf`](Self::cdf) for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {u}")));
        }
        Ok(self.quantile_unchecked(u))
    }

    #[inline]
    fn quantile_unchecked(&self, u: f64) -> f64 {
        let q = 1.0 - self.p_xi;
        if u <= q {
            -self.inv_pow(u / q)
        } else {
            self.inv_pow((1.0 - u) / self.p_xi)
        }
    }

    /// `s^(-1/alpha)` with a fast path for the common `alpha = 2`.
    #[inline]
    fn inv_pow(&self, s: f64) -> f64 {
        if self.alpha == 2.0 {
            1.0 / s.sqrt()
        } else if self.alpha == 1.0 {
            1.0 / s
        } else {
            s.powf(-1.0 / self.alpha)
        }
    }

    #[inline]
    pub fn draw(&self, rng: &mut KeyedRng) -> f64 {
        self.quantile_unchecked(rng.open01())
    }

    /// The noise value attached to a lattice site.
    #[inline]
    pub fn at_site(&self, key: StreamKey, site: &[i64]) -> f64 {
        self.draw(&mut key.site(site))
    }
}

/// `count` i.i.d. draws; draw `i` depends only on `(key, i)`.
pub fn sample_xi(model: &TailModel, count: usize, key: StreamKey) -> Vec<f64> {
    (0..count as u64)
        .map(|i| model.draw(&mut key.index(i)))
        .collect()
}

pub fn tail_prob(model: &TailModel, x: f64) -> Result<(f64, f64)> {
    model.tail_prob(x)
}

/// Law of the multiplier field `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum YKind {
    Constant { s: f64 },
    IidLognormal { mu: f64, sigma: f64 },
    IidAbsGaussian { sigma: f64 },
    /// `Y_v = S * B_v` with `S` drawn once per realization.
    Regime {
        scales: Vec<f64>,
        probs: Vec<f64>,
        base: Box<YKind>,
    },
}

/// Stationary multiplier field independent of the noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolModelY {
    kind: YKind,
    gamma: f64,
}

impl VolModelY {
    /// `gamma` is the order of the moment diagnostic; `None` means `index + 1`
    /// once paired with a tail index (see [`VolModelY::with_default_gamma`]).
    pub fn new(kind: YKind, gamma: f64) -> Result<Self> {
        validate_kind(&kind, true)?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be positive, got {gamma}")));
        }
        Ok(VolModelY { kind, gamma })
    }

    /// Pairs the model with a tail index and uses `gamma = index + 1`.
    pub fn with_default_gamma(kind: YKind, index: f64) -> Result<Self> {
        Self::new(kind, index + 1.0)
    }

    pub fn constant(s: f64) -> Self {
        VolModelY {
            kind: YKind::Constant { s },
            gamma: f64::INFINITY,
        }
    }

    pub fn kind(&self) -> &YKind {
        &self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_regime(&self) -> bool {
        matches!(self.kind, YKind::Regime { .. })
    }

    /// True when every realization is a known constant field given its regime.
    pub fn is_deterministic(&self) -> bool {
        match &self.kind {
            YKind::Constant { .. } => true,
            YKind::Regime { base, .. } => matches!(**base, YKind::Constant { .. }),
            _ => false,
        }
    }

    /// Regime scales with their probabilities; a single unit regime otherwise.
    pub fn regimes(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            YKind::Regime { scales, probs, .. } => {
                scales.iter().copied().zip(probs.iter().copied()).collect()
            }
            _ => vec![(1.0, 1.0)],
        }
    }

    /// `Y` given the regime scale `S = s`; for a non-regime field, `s Y`.
    pub fn conditioned_on(&self, s: f64) -> Result<VolModelY> {
        let base = match &self.kind {
            YKind::Regime { base, .. } => (**base).clone(),
            other => other.clone(),
        };
        match base {
            YKind::Constant { s: b } => Ok(VolModelY::constant(b * s)),
            b => VolModelY::new(
                YKind::Regime {
                    scales: vec![s],
                    probs: vec![1.0],
                    base: Box::new(b),
                },
                self.gamma,
            ),
        }
    }

    /// The stationary (ergodic) factor of the field.
    pub fn base(&self) -> VolModelY {
        match &self.kind {
            YKind::Regime { base, .. } => VolModelY {
                kind: (**base).clone(),
                gamma: self.gamma,
            },
            _ => self.clone(),
        }
    }

    /// Checks `gamma > index`.
    pub fn check_moment_order(&self, index: f64) -> Result<()> {
        if self.gamma > index {
            Ok(())
        } else {
            Err(invalid(
                "gamma",
                format!("moment order {} must exceed the tail index {index}", self.gamma),
            ))
        }
    }

    /// `E|Y_0|^g` in closed form.
    pub fn abs_moment(&self, g: f64) -> f64 {
        abs_moment(&self.kind, g)
    }

    /// `(E(Y_0)_+^a, E(Y_0)_-^a)` in closed form.
    pub fn part_moments(&self, a: f64) -> (f64, f64) {
        part_moments(&self.kind, a)
    }

    /// Draws the regime scale of one realization (1 for ergodic kinds).
    pub fn draw_regime(&self, key: StreamKey) -> Option<f64> {
        match &self.kind {
            YKind::Regime { scales, probs, .. } => {
                let u = key.substream(STREAM_REGIME).index(0).unit();
                let mut acc = 0.0;
                for (s, q) in scales.iter().zip(probs) {
                    acc += q;
                    if u < acc {
                        return Some(*s);
                    }
                }
                scales.last().copied()
            }
            _ => None,
        }
    }

    /// Value of the ergodic factor at a site.
    #[inline]
    pub fn base_at(&self, key: StreamKey, site: &[i64]) -> f64 {
        base_value(self.base_kind(), key, site)
    }

    fn base_kind(&self) -> &YKind {
        match &self.kind {
            YKind::Regime { base, .. } => base,
            k => k,
        }
    }
}

fn validate_kind(kind: &YKind, top: bool) -> Result<()> {
    match kind {
        YKind::Constant { s } => {
            if !s.is_finite() {
                return Err(invalid("y.s", "must be finite"));
            }
        }
        YKind::IidLognormal { mu, sigma } => {
            if !mu.is_finite() || !(*sigma >= 0.0) {
                return Err(invalid("y.sigma", "lognormal needs finite mu and sigma >= 0"));
            }
        }
        YKind::IidAbsGaussian { sigma } => {
            if !(*sigma > 0.0) {
                return Err(invalid("y.sigma", "must be positive"));
            }
        }
        YKind::Regime {
            scales,
            probs,
            base,
        } => {
            if !top {
                return Err(invalid("y.base", "regimes cannot be nested"));
            }
            if scales.is_empty() || scales.len() != probs.len() {
                return Err(invalid("y.scales", "need one probability per scale"));
            }
            if scales.iter().any(|s| !(*s > 0.0)) {
                return Err(invalid("y.scales", "scales must be positive"));
            }
            if probs.iter().any(|q| !(*q >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(invalid("y.probs", "probabilities must be non-negative and sum to 1"));
            }
            validate_kind(base, false)?;
        }
    }
    Ok(())
}

fn abs_moment(kind: &YKind, g: f64) -> f64 {
    match kind {
        YKind::Constant { s } => s.abs().powf(g),
        YKind::IidLognormal { mu, sigma } => (g * mu + 0.5 * g * g * sigma * sigma).exp(),
        YKind::IidAbsGaussian { sigma } => {
            sigma.powf(g) * 2f64.powf(g / 2.0) * gamma((g + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
        }
        YKind::Regime {
            scales,
            probs,
            base,
        } => {
            let b = abs_moment(base, g);
            scales
                .iter()
                .zip(probs)
                .map(|(s, q)| q * s.powf(g) * b)
                .sum()
        }
    }
}

fn part_moments(kind: &YKind, a: f64) -> (f64, f64) {
    match kind {
        YKind::Constant { s } => {
            if *s >= 0.0 {
                (s.powf(a), 0.0)
            } else {
                (0.0, (-s).powf(a))
            }
        }
        YKind::Regime {
            scales,
            probs,
            base,
        } => {
            let (bp, bn) = part_moments(base, a);
            scales.iter().zip(probs).fold((0.0, 0.0), |(p, n), (s, q)| {
                let w = q * s.powf(a);
                (p + w * bp, n + w * bn)
            })
        }
        // remaining kinds are non-negative
        k => (abs_moment(k, a), 0.0),
    }
}

#[inline]
fn base_value(kind: &YKind, key: StreamKey, site: &[i64]) -> f64 {
    match kind {
        YKind::Constant { s } => *s,
        YKind::IidLognormal { mu, sigma } => {
            let n: f64 = StandardNormal.sample(&mut key.site(site));
            (mu + sigma * n).exp()
        }
        YKind::IidAbsGaussian { sigma } => {
            let n: f64 = StandardNormal.sample(&mut key.site(site));
            (sigma * n).abs()
        }
        YKind::Regime { .. } => unreachable!("regimes are not nested"),
    }
}

/// Samples `Y` on `window`. For the regime kind the realized scale `S` is
/// drawn once and recorded in the sample's metadata.
pub fn sample_y_field(model: &VolModelY, window: &LatticeBox, key: StreamKey) -> Result<FieldSample> {
    if window.is_empty() {
        return Err(Error::Domain("window must be non-empty".into()));
    }
    let regime = model.draw_regime(key);
    let scale = regime.unwrap_or(1.0);
    let base = model.base_kind();
    let values = match base {
        YKind::Constant { s } => vec![s * scale; window.len()],
        _ => window
            .sites()
            .map(|site| scale * base_value(base, key, &site))
            .collect(),
    };
    Ok(FieldSample::new(
        window.clone(),
        values,
        FieldMeta {
            source: FieldSource::Multiplier(model.clone()),
            key: key.raw(),
            regime,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{STREAM_NOISE, STREAM_Y};
    use approx::assert_relative_eq;

    #[test]
    fn rejects_invalid_parameters() {
        assert!(TailModel::new(0.0, 0.5).is_err());
        assert!(TailModel::new(2.0, 0.0).is_err());
        assert!(TailModel::new(2.0, 1.5).is_err());
        assert!(VolModelY::new(
            YKind::Regime {
                scales: vec![1.0, 2.0],
                probs: vec![0.5, 0.4],
                base: Box::new(YKind::Constant { s: 1.0 })
            },
            3.0
        )
        .is_err());
    }

    #[test]
    fn tail_prob_closed_forms() {
        let m = TailModel::new(2.0, 1.0).unwrap();
        let (r, l) = m.tail_prob(10.0).unwrap();
        assert_relative_eq!(r, 0.01, max_relative = 1e-15);
        assert_eq!(l, 0.0);
        let sym = TailModel::new(2.0, 0.5).unwrap();
        assert_eq!(sym.tail_prob(1.0).unwrap(), (0.5, 0.5));
        let (r, l) = sym.tail_prob(3.7).unwrap();
        assert_relative_eq!(l / r, 1.0);
        assert!(matches!(m.tail_prob(0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn quantile_inverts_cdf_on_the_support() {
        let m = TailModel::new(2.0, 1.0).unwrap();
        assert_relative_eq!(m.quantile(0.99).unwrap(), 10.0, max_relative = 1e-12);
        let m = TailModel::new(1.3, 0.3).unwrap();
        for &x in &[-50.0, -2.0, -1.0, 1.5, 9.0, 1e4] {
            let u = m.cdf(x);
            assert_relative_eq!(m.quantile(u).unwrap(), x, max_relative = 1e-10);
        }
        assert!(m.quantile(0.0).is_err());
        assert!(m.quantile(1.0).is_err());
    }

    #[test]
    fn empirical_right_tail_matches_exact_formula() {
        let m = TailModel::new(2.0, 1.0).unwrap();
        let n = 1_000_000;
        let draws = sample_xi(&m, n, StreamKey::new(3, STREAM_NOISE));
        let hits = draws.iter().filter(|&&x| x > 2.0).count() as f64 / n as f64;
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((hits - 0.25).abs() < 3.0 * se, "P(xi > 2) ~ {hits}");
        assert!(draws.iter().all(|&x| x >= 1.0));
    }

    #[test]
    fn balanced_noise_is_symmetric() {
        let m = TailModel::new(1.0, 0.5).unwrap();
        let n = 200_000;
        let draws = sample_xi(&m, n, StreamKey::new(5, STREAM_NOISE));
        let neg = draws.iter().filter(|&&x| x < 0.0).count() as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((neg - 0.5).abs() < 3.0 * se);
        assert!(draws.iter().all(|x| x.abs() >= 1.0));
    }

    #[test]
    fn constant_and_regime_fields() {
        let w = LatticeBox::new(vec![0, 0], vec![4, 5]).unwrap();
        let one = sample_y_field(&VolModelY::constant(1.0), &w, StreamKey::new(1, STREAM_Y)).unwrap();
        assert!(one.values().iter().all(|&v| v == 1.0));
        assert_eq!(one.meta().regime, None);

        let regime = VolModelY::new(
            YKind::Regime {
                scales: vec![1.0, 2.0],
                probs: vec![0.5, 0.5],
                base: Box::new(YKind::Constant { s: 1.0 }),
            },
            3.0,
        )
        .unwrap();
        let mut seen = [false; 2];
        for rep in 0..40 {
            let f = sample_y_field(&regime, &w, StreamKey::new(9, STREAM_Y).replication(rep)).unwrap();
            let s = f.meta().regime.unwrap();
            assert!(f.values().iter().all(|&v| v == s));
            seen[(s as usize) - 1] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn lognormal_second_moment() {
        let y = VolModelY::new(YKind::IidLognormal { mu: 0.0, sigma: 0.5 }, 3.0).unwrap();
        let w = LatticeBox::segment(1_000_000);
        let f = sample_y_field(&y, &w, StreamKey::new(2, STREAM_Y)).unwrap();
        let sq: Vec<f64> = f.values().iter().map(|v| v * v).collect();
        let n = sq.len() as f64;
        let mean = sq.iter().sum::<f64>() / n;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 0.5f64.exp();
        assert!((mean - target).abs() < 3.0 * (var / n).sqrt(), "{mean}");
        assert_relative_eq!(y.abs_moment(2.0), target, max_relative = 1e-14);
    }

    #[test]
    fn abs_gaussian_moments_match_known_values() {
        let y = VolModelY::new(YKind::IidAbsGaussian { sigma: 2.0 }, 3.0).unwrap();
        assert_relative_eq!(y.abs_moment(2.0), 4.0, max_relative = 1e-12);
        assert_relative_eq!(
            y.abs_moment(1.0),
            2.0 * (2.0 / std::f64::consts::PI).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn moment_estimates_are_stable_under_doubling() {
        let models = [
            VolModelY::with_default_gamma(YKind::IidLognormal { mu: 0.0, sigma: 0.5 }, 2.0).unwrap(),
            VolModelY::with_default_gamma(YKind::IidAbsGaussian { sigma: 1.0 }, 2.0).unwrap(),
            VolModelY::with_default_gamma(YKind::Constant { s: 1.5 }, 2.0).unwrap(),
        ];
        for y in &models {
            assert_eq!(y.gamma(), 3.0);
            y.check_moment_order(2.0).unwrap();
            let est = |n: i64| {
                let f = sample_y_field(y, &LatticeBox::segment(n), StreamKey::new(4, STREAM_Y)).unwrap();
                f.values().iter().map(|v| v.abs().powf(y.gamma())).sum::<f64>() / n as f64
            };
            let ratio = est(2_000_000) / est(1_000_000);
            assert!(ratio.is_finite() && (0.9..=1.1).contains(&ratio), "{ratio}");
        }
        assert!(VolModelY::new(YKind::Constant { s: 1.0 }, 1.5)
            .unwrap()
            .check_moment_order(2.0)
            .is_err());
    }
}
