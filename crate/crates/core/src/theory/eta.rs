use serde::Serialize;

use super::spectral::{ma_spectral_atoms, SpectralAtoms};
use super::{breiman_constant, ma_tail_balance_p, ma_tail_constant};
use crate::error::{invalid, Error, Result};
use crate::lattice::Site;
use crate::parallel::{mean_se, sum_moments};
use crate::rng::StreamKey;
use crate::sim::KernelPsi;
use crate::tailmodels::{TailModel, VolModelY, YKind};

/// Neighborhood radii of the default convergence sweep.
pub const DEFAULT_SWEEP: [i64; 6] = [1, 2, 5, 10, 20, 50];

/// `eta` for one regime of the multiplier field (the only one when `Y` is
/// ergodic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaValue {
    pub regime: Option<f64>,
    pub probability: f64,
    pub eta: f64,
    pub se: f64,
}

/// The pieces of `Y` that enter a per-regime evaluation.
struct RegimeView<'a> {
    scale: f64,
    base: &'a YKind,
    deterministic: Option<f64>,
}

fn regime_views(y: &VolModelY) -> Vec<(Option<f64>, f64, RegimeView<'_>)> {
    let base = match y.kind() {
        YKind::Regime { base, .. } => &**base,
        k => k,
    };
    let constant = match base {
        YKind::Constant { s } => Some(*s),
        _ => None,
    };
    let view = |scale: f64| RegimeView {
        scale,
        base,
        deterministic: constant.map(|s| s * scale),
    };
    if y.is_regime() {
        y.regimes()
            .into_iter()
            .map(|(s, q)| (Some(s), q, view(s)))
            .collect()
    } else {
        vec![(None, 1.0, view(1.0))]
    }
}

impl RegimeView<'_> {
    #[inline]
    fn value(&self, y: &VolModelY, key: StreamKey, site: &[i64]) -> f64 {
        match self.deterministic {
            Some(v) => v,
            None => {
                debug_assert!(!matches!(self.base, YKind::Constant { .. }));
                self.scale * y.base_at(key, site)
            }
        }
    }
}

#[inline]
fn truncate(v: f64, k_trunc: Option<f64>) -> f64 {
    match k_trunc {
        Some(k) if v.abs() > k => 0.0,
        _ => v,
    }
}

#[inline]
fn pos_pow(x: f64, kappa: f64) -> f64 {
    if x > 0.0 {
        x.powf(kappa)
    } else {
        0.0
    }
}

/// `sum_j w_j ((y_0 Θ_{j,0})_+^κ - (max_{v ∈ A_0^(m)} y_v Θ_{j,v})_+^κ)_+`.
fn atom_numerator(atoms: &SpectralAtoms, kappa: f64, y: &[f64]) -> f64 {
    let origin = atoms.origin();
    atoms
        .atoms()
        .iter()
        .map(|a| {
            let mut lead = 0.0;
            let mut tail_max = 0.0f64;
            for &(i, th) in &a.entries {
                if i == origin {
                    lead = y[i] * th;
                } else if i > origin {
                    tail_max = tail_max.max(y[i] * th);
                }
            }
            a.weight * (pos_pow(lead, kappa) - pos_pow(tail_max, kappa)).max(0.0)
        })
        .sum()
}

/// The extremal functional from a discrete spectral measure:
/// `E[((Y_0 1{|Y_0|<=K} Θ_0)_+^κ - (max_{v ∈ A_0^(m)} Y_v 1{|Y_v|<=K} Θ_v)_+^κ)_+] / E(Θ_0)_+^κ`
/// with `Y` independent of `Θ`. The expectation over `Θ` is an exact sum over
/// atoms; the one over `Y` is exact for constant fields and Monte Carlo with
/// `samples` draws otherwise. `k_trunc = None` means `K = ∞`. One value per
/// regime of `Y`.
pub fn eta_tkm(
    atoms: &SpectralAtoms,
    y: &VolModelY,
    k_trunc: Option<f64>,
    kappa: f64,
    samples: u64,
    key: StreamKey,
) -> Result<Vec<EtaValue>> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa", "must be positive"));
    }
    if let Some(k) = k_trunc {
        if !(k > 0.0) {
            return Err(invalid("k_trunc", "must be positive"));
        }
    }
    let origin = atoms.origin();
    let denom: f64 = atoms
        .atoms()
        .iter()
        .map(|a| a.weight * pos_pow(a.value_at(origin), kappa))
        .sum();
    if denom <= 0.0 {
        return Err(Error::DegenerateSpectral);
    }
    let window = atoms.window();
    let sites: Vec<Site> = window.sites().collect();
    let mut out = Vec::new();
    for (regime, probability, view) in regime_views(y) {
        let value = if let Some(c) = view.deterministic {
            let yv = vec![truncate(c, k_trunc); sites.len()];
            EtaValue {
                regime,
                probability,
                eta: atom_numerator(atoms, kappa, &yv) / denom,
                se: 0.0,
            }
        } else {
            if samples < 2 {
                return Err(invalid("samples", "need at least 2 for a random multiplier field"));
            }
            let (s, s2) = sum_moments(samples, 64, |i| {
                let k = key.replication(i);
                let yv: Vec<f64> = sites
                    .iter()
                    .map(|v| truncate(view.value(y, k, v), k_trunc))
                    .collect();
                atom_numerator(atoms, kappa, &yv)
            });
            let (mean, se) = mean_se(s, s2, samples);
            EtaValue {
                regime,
                probability,
                eta: mean / denom,
                se: se / denom,
            }
        };
        out.push(value);
    }
    Ok(out)
}

/// One regime's entry of an [`EtaReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaEntry {
    pub regime: Option<f64>,
    pub probability: f64,
    pub eta: f64,
    pub eta_se: f64,
    pub theta: f64,
    pub breiman_const: f64,
}

/// `eta` at one neighborhood radius of a convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub m: i64,
    pub regime: Option<f64>,
    pub eta: f64,
    pub se: f64,
    /// Whether the value moved by less than two combined standard errors
    /// from the previous radius.
    pub stable: bool,
}

/// Extremal functional and extremal index with the parameters they were
/// evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaReport {
    pub entries: Vec<EtaEntry>,
    pub index: f64,
    pub k_trunc: Option<f64>,
    pub m: Option<i64>,
    pub t: i64,
    pub sweep: Vec<SweepRow>,
}

impl EtaReport {
    /// The entry of an ergodic field.
    pub fn single(&self) -> Result<&EtaEntry> {
        match self.entries.as_slice() {
            [e] if e.regime.is_none() => Ok(e),
            _ => Err(Error::MissingEta(
                "the multiplier field has several regimes; use the per-regime entries".into(),
            )),
        }
    }

    pub fn for_regime(&self, s: f64) -> Option<&EtaEntry> {
        self.entries.iter().find(|e| e.regime == Some(s))
    }
}

pub(crate) fn sweep_rows(values: &[(i64, Vec<EtaValue>)]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    let mut previous: Vec<Option<EtaValue>> = Vec::new();
    for (m, vals) in values {
        previous.resize(vals.len(), None);
        for (r, v) in vals.iter().enumerate() {
            let stable = previous[r].is_some_and(|p| {
                let diff = (v.eta - p.eta).abs();
                let se = (v.se * v.se + p.se * p.se).sqrt();
                if se > 0.0 {
                    diff < 2.0 * se
                } else {
                    diff <= 1e-12 * v.eta.abs().max(1.0)
                }
            });
            rows.push(SweepRow {
                m: *m,
                regime: v.regime,
                eta: v.eta,
                se: v.se,
                stable,
            });
            previous[r] = Some(*v);
        }
    }
    rows
}

/// Extremal functional of a moving-average field by the closed form
/// `eta = E[max_v (p_xi (Y_v psi_v)_+^α + (1 - p_xi) (Y_v psi_v)_-^α)] / sum_u (p_xi (psi_u)_+^α + (1 - p_xi) (psi_u)_-^α)`
/// and `theta = eta / breiman_const`, per regime of `Y`. The expectation is
/// exact for constant fields and Monte Carlo otherwise. `sweep` lists radii
/// `m` at which the atom formula is evaluated as a convergence check.
pub fn ma_extremal_index(
    kernel: &KernelPsi,
    y: &VolModelY,
    tail: &TailModel,
    samples: u64,
    key: StreamKey,
    sweep: &[i64],
) -> Result<EtaReport> {
    let alpha = tail.alpha();
    let p_xi = tail.p_xi();
    y.check_moment_order(alpha)?;
    let tail_const = ma_tail_constant(kernel, alpha, p_xi);
    let p = ma_tail_balance_p(kernel, alpha, p_xi);
    let contribution = |yv: f64, c: f64| {
        let x = yv * c;
        if x > 0.0 {
            p_xi * x.powf(alpha)
        } else {
            (1.0 - p_xi) * (-x).powf(alpha)
        }
    };
    let mut entries = Vec::new();
    for (regime, probability, view) in regime_views(y) {
        let (eta, eta_se) = if let Some(c) = view.deterministic {
            let m = kernel
                .coefficients()
                .iter()
                .map(|(_, psi)| contribution(c, *psi))
                .fold(0.0, f64::max);
            (m / tail_const, 0.0)
        } else {
            if samples < 2 {
                return Err(invalid("samples", "need at least 2 for a random multiplier field"));
            }
            let (s, s2) = sum_moments(samples, 1024, |i| {
                let k = key.replication(i);
                kernel
                    .coefficients()
                    .iter()
                    .map(|(u, psi)| contribution(view.value(y, k, u), *psi))
                    .fold(0.0, f64::max)
            });
            let (mean, se) = mean_se(s, s2, samples);
            (mean / tail_const, se / tail_const)
        };
        let scaled = match regime {
            Some(s) => y.conditioned_on(s)?,
            None => y.clone(),
        };
        let breiman = breiman_constant(&scaled, alpha, p)?;
        entries.push(EtaEntry {
            regime,
            probability,
            eta,
            eta_se,
            theta: eta / breiman,
            breiman_const: breiman,
        });
    }
    let mut values = Vec::new();
    for &m in sweep {
        let atoms = ma_spectral_atoms(kernel, m, alpha, p_xi)?;
        values.push((m, eta_tkm(&atoms, y, None, alpha, samples, key)?));
    }
    Ok(EtaReport {
        entries,
        index: alpha,
        k_trunc: None,
        m: sweep.last().copied(),
        t: kernel.radius(),
        sweep: sweep_rows(&values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::STREAM_THEORY;
    use approx::assert_relative_eq;

    fn psi() -> KernelPsi {
        KernelPsi::causal_1d(&[1.0, 0.5]).unwrap()
    }

    fn key() -> StreamKey {
        StreamKey::new(9, STREAM_THEORY)
    }

    #[test]
    fn exact_atom_evaluation() {
        let one = VolModelY::constant(1.0);
        let atoms = ma_spectral_atoms(&psi(), 1, 2.0, 1.0).unwrap();
        let v = eta_tkm(&atoms, &one, None, 2.0, 0, key()).unwrap();
        assert_relative_eq!(v[0].eta, 0.8, max_relative = 1e-14);
        let two = eta_tkm(&atoms, &VolModelY::constant(2.0), None, 2.0, 0, key()).unwrap();
        assert_relative_eq!(two[0].eta, 3.2, max_relative = 1e-14);
        let id = ma_spectral_atoms(&KernelPsi::identity(1), 3, 2.0, 1.0).unwrap();
        assert_relative_eq!(eta_tkm(&id, &one, None, 2.0, 0, key()).unwrap()[0].eta, 1.0);
    }

    #[test]
    fn regime_values_scale_with_the_regime() {
        let y = VolModelY::new(
            YKind::Regime {
                scales: vec![1.0, 2.0],
                probs: vec![0.5, 0.5],
                base: Box::new(YKind::Constant { s: 1.0 }),
            },
            3.0,
        )
        .unwrap();
        let tail = TailModel::new(2.0, 1.0).unwrap();
        let r = ma_extremal_index(&psi(), &y, &tail, 0, key(), &[1, 2]).unwrap();
        assert_relative_eq!(r.for_regime(1.0).unwrap().eta, 0.8, max_relative = 1e-14);
        assert_relative_eq!(r.for_regime(2.0).unwrap().eta, 3.2, max_relative = 1e-14);
        assert_relative_eq!(r.for_regime(2.0).unwrap().theta, 0.8, max_relative = 1e-14);
        assert!(r.single().is_err());
        assert_eq!(r.sweep.len(), 4);
        assert!(r.sweep[2].stable && r.sweep[3].stable);
    }

    #[test]
    fn negative_only_spectral_mass_is_degenerate() {
        let k = KernelPsi::causal_1d(&[-1.0]).unwrap();
        let atoms = ma_spectral_atoms(&k, 0, 2.0, 1.0).unwrap();
        assert_eq!(
            eta_tkm(&atoms, &VolModelY::constant(1.0), None, 2.0, 0, key()),
            Err(Error::DegenerateSpectral)
        );
    }

    #[test]
    fn truncation_removes_large_multipliers() {
        let atoms = ma_spectral_atoms(&psi(), 1, 2.0, 1.0).unwrap();
        let y = VolModelY::constant(2.0);
        assert_eq!(eta_tkm(&atoms, &y, Some(1.5), 2.0, 0, key()).unwrap()[0].eta, 0.0);
        assert_relative_eq!(eta_tkm(&atoms, &y, Some(1e3), 2.0, 0, key()).unwrap()[0].eta, 3.2, max_relative = 1e-14);
    }

    #[test]
    fn closed_form_and_atom_routes_agree_for_random_multipliers() {
        let y = VolModelY::new(YKind::IidLognormal { mu: 0.0, sigma: 0.5 }, 3.0).unwrap();
        let tail = TailModel::new(2.0, 1.0).unwrap();
        let r = ma_extremal_index(&psi(), &y, &tail, 40_000, key(), &[1]).unwrap();
        let e = r.single().unwrap();
        let s = &r.sweep[0];
        let combined = (e.eta_se.powi(2) + s.se.powi(2)).sqrt();
        assert!((e.eta - s.eta).abs() < 4.0 * combined, "{} vs {}", e.eta, s.eta);
        assert_relative_eq!(e.theta * e.breiman_const, e.eta, max_relative = 1e-15);
        assert!(e.theta > 0.0 && e.theta <= 1.0);
    }
}
