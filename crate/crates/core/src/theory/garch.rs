use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::eta::{sweep_rows, EtaValue, SweepRow};
use super::quadrature::GaussianExpectation;
use crate::error::{invalid, Error, Result};
use crate::parallel::{map_indexed, mean_se};
use crate::rng::StreamKey;
use crate::sim::GarchParams;
use crate::tailmodels::{VolModelY, YKind};

const BRACKET_LIMIT: f64 = 1024.0;

/// Root `alpha_hat` of `E A^kappa = 1` with the final bisection bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GarchIndex {
    pub alpha_hat: f64,
    /// `E A^alpha_hat - 1` under quadrature.
    pub residual: f64,
    pub bracket: (f64, f64),
    pub bracket_residuals: (f64, f64),
}

impl GarchIndex {
    /// Regular-variation index `2 alpha_hat` of the volatility `Z`.
    pub fn z_index(&self) -> f64 {
        2.0 * self.alpha_hat
    }
}

/// Exponent used on the products `prod sqrt(A_i)` in the GARCH extremal
/// functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GarchExponent {
    /// `kappa = 2 alpha_hat`, the regular-variation index of `Z`.
    #[default]
    RegularVariation,
    /// `kappa = alpha_hat`.
    Literal,
}

impl GarchExponent {
    pub fn kappa(self, alpha_hat: f64) -> f64 {
        match self {
            GarchExponent::RegularVariation => 2.0 * alpha_hat,
            GarchExponent::Literal => alpha_hat,
        }
    }
}

/// Bisection for the positive root of a function that is negative at
/// `lo = 1` and eventually positive.
fn bisect_root(g: impl Fn(f64) -> f64, tol: f64) -> Result<(f64, f64, f64, f64)> {
    let mut lo = 1.0;
    let mut g_lo = g(lo);
    if !(g_lo < 0.0) {
        return Err(Error::KappaConditionUnmet { upper: lo });
    }
    let mut hi = 2.0;
    let mut g_hi = g(hi);
    while !(g_hi > 0.0) {
        if hi >= BRACKET_LIMIT {
            return Err(Error::KappaConditionUnmet { upper: hi });
        }
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        g_hi = g(hi);
    }
    for _ in 0..200 {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        if g_mid < 0.0 {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    Ok((lo, hi, g_lo, g_hi))
}

/// Solves `E (alpha1 xi^2 + beta1)^kappa = 1` for `kappa > 0` by bisection,
/// with the expectation evaluated by 128-node Gauss–Hermite quadrature.
///
/// `g(kappa) = E A^kappa - 1` is convex with `g(0) = 0` and `g(1) = alpha1 + beta1 - 1 < 0`,
/// so the search starts from the bracket `[1, 2]` and doubles the upper end.
pub fn garch_tail_index(params: &GarchParams, tol: f64) -> Result<GarchIndex> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let quad = GaussianExpectation::default();
    let g = |kappa: f64| {
        let v = quad.expect(|x| params.multiplier(x).powf(kappa)) - 1.0;
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (lo, hi, g_lo, g_hi) = bisect_root(g, 1e-14)?;
    let alpha_hat = 0.5 * (lo + hi);
    let residual = g(alpha_hat);
    if residual.abs() >= tol {
        return Err(Error::Domain(format!(
            "quadrature residual {residual:e} above tolerance {tol:e}"
        )));
    }
    Ok(GarchIndex {
        alpha_hat,
        residual,
        bracket: (lo, hi),
        bracket_residuals: (g_lo, g_hi),
    })
}

/// Monte Carlo root of `E A^kappa = 1` with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GarchIndexMc {
    pub alpha_hat: f64,
    pub se: f64,
    pub samples: u64,
}

/// The same root with the expectation replaced by a sample mean over
/// `samples` draws of `A`.
pub fn garch_tail_index_mc(params: &GarchParams, samples: u64, key: StreamKey) -> Result<GarchIndexMc> {
    if samples < 1000 {
        return Err(Error::SampleTooSmall {
            needed: 1000,
            got: samples as usize,
        });
    }
    const BLOCK: u64 = 1 << 16;
    let blocks = samples.div_ceil(BLOCK);
    let log_a: Vec<Vec<f64>> = map_indexed(blocks, |b| {
        let mut rng = key.index(b);
        let len = (samples - b * BLOCK).min(BLOCK);
        (0..len)
            .map(|_| params.multiplier(StandardNormal.sample(&mut rng)).ln())
            .collect()
    });
    // sample mean of A^(kappa * power)
    let moment = |kappa: f64, power: f64| -> f64 {
        let parts = map_indexed(blocks, |b| {
            log_a[b as usize]
                .iter()
                .map(|&l| (power * kappa * l).exp())
                .sum::<f64>()
        });
        parts.into_iter().sum::<f64>() / samples as f64
    };
    let g = |kappa: f64| moment(kappa, 1.0) - 1.0;
    let (lo, hi, _, _) = bisect_root(g, 1e-12)?;
    let alpha_hat = 0.5 * (lo + hi);
    let mean = moment(alpha_hat, 1.0);
    let second = moment(alpha_hat, 2.0);
    let var = second - mean * mean;
    // derivative of the sample moment: E[A^kappa log A]
    let parts = map_indexed(blocks, |b| {
        log_a[b as usize]
            .iter()
            .map(|&l| (alpha_hat * l).exp() * l)
            .sum::<f64>()
    });
    let slope = parts.into_iter().sum::<f64>() / samples as f64;
    let se = (var / samples as f64).sqrt() / slope;
    Ok(GarchIndexMc {
        alpha_hat,
        se,
        samples,
    })
}

#[inline]
fn pos_pow(x: f64, kappa: f64) -> f64 {
    if x > 0.0 {
        x.powf(kappa)
    } else {
        0.0
    }
}

#[inline]
fn truncate(v: f64, k_trunc: Option<f64>) -> f64 {
    match k_trunc {
        Some(k) if v.abs() > k => 0.0,
        _ => v,
    }
}

/// Multiplier values `Y_0..Y_m` of one Monte Carlo sample.
fn y_path(y: &VolModelY, scale: f64, key: StreamKey, m: usize, k_trunc: Option<f64>) -> Vec<f64> {
    match y.base().kind() {
        YKind::Constant { s } => vec![truncate(s * scale, k_trunc); m + 1],
        _ => (0..=m as i64)
            .map(|v| truncate(scale * y.base_at(key, &[v]), k_trunc))
            .collect(),
    }
}

fn regimes(y: &VolModelY) -> Vec<(Option<f64>, f64)> {
    if y.is_regime() {
        y.regimes().into_iter().map(|(s, q)| (Some(s), q)).collect()
    } else {
        vec![(None, 1.0)]
    }
}

fn check_inputs(y: &VolModelY, kappa: f64, samples: u64) -> Result<()> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa", "must be positive"));
    }
    if samples < 2 {
        return Err(invalid("samples", "need at least 2"));
    }
    y.check_moment_order(kappa)
}

/// `E[((Y_0 1{|Y_0|<=K})_+^κ - (max_{1<=v<=m} Y_v 1{|Y_v|<=K} prod_{i=1}^v sqrt(A_i))_+^κ)_+]`
/// with `A_i = alpha1 xi_i^2 + beta1` i.i.d. and independent of `Y`; one
/// value per regime of `Y`. Sample `i` uses the same innovations for every
/// `m`, so values are pathwise non-increasing in `m`.
pub fn garch_eta(
    params: &GarchParams,
    y: &VolModelY,
    k_trunc: Option<f64>,
    m: usize,
    kappa: f64,
    samples: u64,
    key: StreamKey,
) -> Result<Vec<EtaValue>> {
    let rows = garch_eta_sweep(params, y, k_trunc, &[m], kappa, samples, key)?;
    Ok(rows
        .into_iter()
        .map(|r| EtaValue {
            regime: r.regime,
            probability: regimes(y)
                .into_iter()
                .find(|(s, _)| *s == r.regime)
                .map(|(_, q)| q)
                .unwrap_or(1.0),
            eta: r.eta,
            se: r.se,
        })
        .collect())
}

/// [`garch_eta`] at several neighborhood radii from one set of samples.
pub fn garch_eta_sweep(
    params: &GarchParams,
    y: &VolModelY,
    k_trunc: Option<f64>,
    ms: &[usize],
    kappa: f64,
    samples: u64,
    key: StreamKey,
) -> Result<Vec<SweepRow>> {
    check_inputs(y, kappa, samples)?;
    let mut sorted = ms.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let m_max = sorted.last().copied().unwrap_or(0);
    let mut values: Vec<(i64, Vec<EtaValue>)> = sorted.iter().map(|&m| (m as i64, Vec::new())).collect();
    for (regime, probability) in regimes(y) {
        let scale = regime.unwrap_or(1.0);
        const BLOCK: u64 = 256;
        let parts = map_indexed(samples.div_ceil(BLOCK), |b| {
            let mut sums = vec![(0.0, 0.0); sorted.len()];
            for i in b * BLOCK..((b + 1) * BLOCK).min(samples) {
                let k = key.replication(i);
                let yv = y_path(y, scale, k, m_max, k_trunc);
                let lead = pos_pow(yv[0], kappa);
                let mut rng = k.index(0);
                let mut prod = 1.0;
                let mut run_max = 0.0f64;
                let mut next = 0;
                for v in 0..=m_max {
                    if v > 0 {
                        let xi: f64 = StandardNormal.sample(&mut rng);
                        prod *= params.multiplier(xi).sqrt();
                        run_max = run_max.max(yv[v] * prod);
                    }
                    while next < sorted.len() && sorted[next] == v {
                        let term = (lead - pos_pow(run_max, kappa)).max(0.0);
                        sums[next].0 += term;
                        sums[next].1 += term * term;
                        next += 1;
                    }
                }
            }
            sums
        });
        for (j, slot) in values.iter_mut().enumerate() {
            let (s, s2) = parts
                .iter()
                .fold((0.0, 0.0), |(a, b), p| (a + p[j].0, b + p[j].1));
            let (eta, se) = mean_se(s, s2, samples);
            slot.1.push(EtaValue {
                regime,
                probability,
                eta,
                se,
            });
        }
    }
    Ok(sweep_rows(&values))
}

/// The extremal functional through the spectral measure of
/// `R^m = (1, sqrt(A_{-m}), ..., sqrt(A_{-m} ... A_{m-1}))` with importance
/// weights `||R^m||^kappa`: the ratio of
/// `E[((Y_0 R_0)_+^κ - (max_{v ∈ A_0^(m)} Y_v R_v)_+^κ)_+]` to `E R_0^κ`.
/// Coincides with [`garch_eta`] when `kappa = 2 alpha_hat`.
pub fn garch_eta_spectral(
    params: &GarchParams,
    y: &VolModelY,
    k_trunc: Option<f64>,
    m: usize,
    kappa: f64,
    samples: u64,
    key: StreamKey,
) -> Result<Vec<EtaValue>> {
    check_inputs(y, kappa, samples)?;
    let mut out = Vec::new();
    for (regime, probability) in regimes(y) {
        let scale = regime.unwrap_or(1.0);
        let pairs = map_indexed(samples, |i| {
            let k = key.replication(i);
            let yv = y_path(y, scale, k, m, k_trunc);
            let mut rng = k.index(1);
            // R_{-m} = 1, R_v = R_{v-1} sqrt(A_{v-1})
            let mut r = 1.0;
            for _ in 0..m {
                let xi: f64 = StandardNormal.sample(&mut rng);
                r *= params.multiplier(xi).sqrt();
            }
            let r0 = r;
            let mut run_max = 0.0f64;
            for v in 1..=m {
                let xi: f64 = StandardNormal.sample(&mut rng);
                r *= params.multiplier(xi).sqrt();
                run_max = run_max.max(yv[v] * r);
            }
            let num = (pos_pow(yv[0] * r0, kappa) - pos_pow(run_max, kappa)).max(0.0);
            (num, r0.powf(kappa))
        });
        let (sn, sd) = pairs.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        if sd <= 0.0 {
            return Err(Error::DegenerateSpectral);
        }
        let eta = sn / sd;
        let resid: f64 = pairs.iter().map(|(n, d)| (n - eta * d).powi(2)).sum();
        out.push(EtaValue {
            regime,
            probability,
            eta,
            se: resid.sqrt() / sd,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::STREAM_THEORY;

    #[test]
    fn tail_index_root_and_bracket() {
        let p = GarchParams::new(0.1, 0.1, 0.85).unwrap();
        let g = garch_tail_index(&p, 1e-6).unwrap();
        assert!((g.alpha_hat - 4.535886853606037).abs() < 1e-8, "{}", g.alpha_hat);
        assert!(g.residual.abs() < 1e-6);
        assert!(g.bracket_residuals.0 < 0.0 && g.bracket_residuals.1 > 0.0);
        assert!(g.bracket.0 <= g.alpha_hat && g.alpha_hat <= g.bracket.1);
    }

    #[test]
    fn near_unit_persistence_pushes_the_root_towards_one() {
        let p = GarchParams::new(0.1, 0.5, 0.499).unwrap();
        let g = garch_tail_index(&p, 1e-6).unwrap();
        assert!(g.alpha_hat > 1.0 && g.alpha_hat < 1.1, "{}", g.alpha_hat);
    }

    #[test]
    fn empty_neighborhood_gives_one() {
        let p = GarchParams::new(0.1, 0.1, 0.85).unwrap();
        let v = garch_eta(&p, &VolModelY::constant(1.0), None, 0, 9.0, 100, StreamKey::new(1, STREAM_THEORY)).unwrap();
        assert_eq!(v[0].eta, 1.0);
        assert_eq!(v[0].se, 0.0);
    }

    #[test]
    fn sweep_is_monotone_in_m() {
        let p = GarchParams::new(0.1, 0.1, 0.85).unwrap();
        let kappa = 2.0 * garch_tail_index(&p, 1e-6).unwrap().alpha_hat;
        let rows = garch_eta_sweep(
            &p,
            &VolModelY::constant(1.0),
            None,
            &[0, 1, 2, 5, 10, 20],
            kappa,
            20_000,
            StreamKey::new(2, STREAM_THEORY),
        )
        .unwrap();
        assert_eq!(rows.len(), 6);
        for w in rows.windows(2) {
            assert!(w[1].eta <= w[0].eta);
        }
    }

    #[test]
    fn spectral_route_matches_direct_route_at_the_index() {
        let p = GarchParams::new(0.1, 0.1, 0.85).unwrap();
        let kappa = 2.0 * garch_tail_index(&p, 1e-6).unwrap().alpha_hat;
        let one = VolModelY::constant(1.0);
        let key = StreamKey::new(5, STREAM_THEORY);
        let direct = garch_eta(&p, &one, None, 3, kappa, 200_000, key).unwrap()[0];
        let spectral = garch_eta_spectral(&p, &one, None, 3, kappa, 200_000, key.substream(1)).unwrap()[0];
        let se = (direct.se.powi(2) + spectral.se.powi(2)).sqrt();
        assert!((direct.eta - spectral.eta).abs() < 4.0 * se, "{direct:?} {spectral:?}");
    }
}
