//! Poisson limit tests for cluster counts over regions of `C`.

use serde::Serialize;

use crate::clusters::{box_clusters, count_regions, exceedance_set, poisson_gof, proximity_clusters, ClusterRule, PoissonGof, PreparedRegions};
use crate::error::{invalid, Error, Result};
use crate::estimators::ReplicationPlan;
use crate::geometry::Region;
use crate::parallel::map_indexed;
use crate::theory::EtaValue;

/// Pass/fail thresholds for the Poisson limit checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitThresholds {
    pub dispersion: (f64, f64),
    pub p_min: f64,
    pub corr_max: f64,
}

impl Default for LimitThresholds {
    fn default() -> Self {
        LimitThresholds {
            dispersion: (0.85, 1.15),
            p_min: 0.01,
            corr_max: 0.1,
        }
    }
}

/// A cluster-count experiment: replications, regions of `C`, the level
/// multiplier `x` and the extremal functional per regime.
#[derive(Debug, Clone)]
pub struct LimitTestSpec {
    pub plan: ReplicationPlan,
    pub regions: Vec<Region>,
    pub x: f64,
    /// One value per regime, or a single value with `regime = None`.
    pub eta: Vec<EtaValue>,
    pub thresholds: LimitThresholds,
    /// Reject overlapping regions.
    pub require_disjoint: bool,
}

impl LimitTestSpec {
    fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(invalid("regions", "need at least one region"));
        }
        if !(self.x > 0.0 && self.x.is_finite()) {
            return Err(invalid("x", "must be positive"));
        }
        if self.require_disjoint {
            let geom = self.plan.geometry();
            let masks = self
                .regions
                .iter()
                .map(|r| geom.region_mask(r))
                .collect::<Result<Vec<_>>>()?;
            for i in 0..masks.len() {
                for j in i + 1..masks.len() {
                    if masks[i].iter().zip(&masks[j]).any(|(a, b)| *a && *b) {
                        return Err(invalid("regions", format!("regions {i} and {j} overlap")));
                    }
                }
            }
        }
        Ok(())
    }

    fn eta_for(&self, regime: Option<f64>) -> Result<f64> {
        let hit = self
            .eta
            .iter()
            .find(|e| e.regime == regime)
            .or_else(|| match (regime, self.eta.as_slice()) {
                (None, [single]) => Some(single),
                _ => None,
            });
        hit.map(|e| e.eta).ok_or_else(|| {
            Error::MissingEta(match regime {
                Some(s) => format!("no value for regime {s}; evaluate it with the theory or estimator modules"),
                None => "evaluate eta with the theory or estimator modules first".into(),
            })
        })
    }
}

/// Cluster counts of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepCounts {
    pub regime: Option<f64>,
    pub exceedances: usize,
    /// Clusters in all of `D_n` under the box and proximity rules.
    pub total_box: usize,
    pub total_proximity: usize,
    pub box_counts: Vec<usize>,
    pub proximity_counts: Vec<usize>,
}

impl RepCounts {
    pub fn counts(&self, rule: ClusterRule) -> &[usize] {
        match rule {
            ClusterRule::Box => &self.box_counts,
            ClusterRule::Proximity => &self.proximity_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRun {
    pub a_n: f64,
    pub x: f64,
    pub reps: Vec<RepCounts>,
}

impl CountRun {
    /// Replications where the proximity count exceeds the box count in `D_n`
    /// or in some region.
    pub fn ordering_violations(&self) -> usize {
        self.reps
            .iter()
            .filter(|r| {
                r.total_proximity > r.total_box
                    || r.proximity_counts.iter().zip(&r.box_counts).any(|(p, b)| p > b)
            })
            .count()
    }
}

/// Simulates the replications and counts clusters above `a_n x` per region.
pub fn simulate_counts(spec: &LimitTestSpec) -> Result<CountRun> {
    spec.validate()?;
    let plan = &spec.plan;
    let geom = plan.geometry();
    let regions = PreparedRegions::new(geom, spec.regions.clone())?;
    let a_n = plan.a_n()?;
    let level = a_n * spec.x;
    let reps = map_indexed(plan.replications(), |r| -> Result<RepCounts> {
        let field = plan.simulate_x(r)?;
        let phi = exceedance_set(&field, geom, level)?;
        let boxes = box_clusters(&phi, geom.tiling());
        let prox = proximity_clusters(&phi, geom.t_n())?;
        Ok(RepCounts {
            regime: field.meta().regime,
            exceedances: phi.len(),
            total_box: boxes.gamma(),
            total_proximity: prox.gamma(),
            box_counts: count_regions(&boxes, &regions),
            proximity_counts: count_regions(&prox, &regions),
        })
    });
    let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CountRun { a_n, x: spec.x, reps })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionReport {
    pub region: usize,
    pub fraction: f64,
    pub lambda: f64,
    pub mean: f64,
    pub se: f64,
    pub mean_within_3se: bool,
    pub gof: Option<PoissonGof>,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub first: usize,
    pub second: usize,
    pub corr: f64,
    /// `E[count_1 count_2]` with its standard error, against `lambda_1 lambda_2`.
    pub cross_moment: f64,
    pub cross_moment_se: f64,
    pub lambda_product: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumReport {
    pub regime: Option<f64>,
    pub reps: usize,
    pub eta: f64,
    pub regions: Vec<RegionReport>,
    pub pairs: Vec<PairReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub rule: ClusterRule,
    pub a_n: f64,
    pub x: f64,
    pub thresholds: LimitThresholds,
    /// Every count is zero: the level is out of reach and no test is run.
    pub degenerate: bool,
    pub ordering_violations: usize,
    pub strata: Vec<StratumReport>,
    pub passes: bool,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, _) = mean_se(a);
    let (mb, _) = mean_se(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// GOF of the counts per region against `Poisson(|A| x^{-alpha} eta)`,
/// stratified by regime, plus pairwise independence checks.
pub fn limit_report(spec: &LimitTestSpec, run: &CountRun, rule: ClusterRule) -> Result<LimitReport> {
    let geom = spec.plan.geometry();
    let index = spec.plan.z().index();
    let th = spec.thresholds;
    let degenerate = run.reps.iter().all(|r| r.counts(rule).iter().all(|&c| c == 0));
    let mut labels: Vec<Option<f64>> = run.reps.iter().map(|r| r.regime).collect();
    labels.sort_by(|a, b| a.partial_cmp(b).expect("finite regimes"));
    labels.dedup();
    let fractions: Vec<f64> = spec.regions.iter().map(|r| r.fraction(geom)).collect();
    let mut strata = Vec::new();
    for label in labels {
        let eta = spec.eta_for(label)?;
        let reps: Vec<&RepCounts> = run.reps.iter().filter(|r| r.regime == label).collect();
        let column = |j: usize| -> Vec<f64> { reps.iter().map(|r| r.counts(rule)[j] as f64).collect() };
        let lambdas: Vec<f64> = fractions.iter().map(|f| f * spec.x.powf(-index) * eta).collect();
        let mut regions = Vec::new();
        for (j, &lambda) in lambdas.iter().enumerate() {
            let col = column(j);
            let (mean, se) = mean_se(&col);
            let within = (mean - lambda).abs() <= 3.0 * se;
            let gof = if degenerate {
                None
            } else {
                let ints: Vec<u64> = col.iter().map(|&c| c as u64).collect();
                poisson_gof(&ints, lambda).ok()
            };
            let passes = !degenerate && within && gof.as_ref().is_some_and(|g| g.passes(th.dispersion, th.p_min));
            regions.push(RegionReport {
                region: j,
                fraction: fractions[j],
                lambda,
                mean,
                se,
                mean_within_3se: within,
                gof,
                passes,
            });
        }
        let mut pairs = Vec::new();
        for a in 0..lambdas.len() {
            for b in a + 1..lambdas.len() {
                let (ca, cb) = (column(a), column(b));
                let prod: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| x * y).collect();
                let (cross, cross_se) = mean_se(&prod);
                let corr = correlation(&ca, &cb);
                pairs.push(PairReport {
                    first: a,
                    second: b,
                    corr,
                    cross_moment: cross,
                    cross_moment_se: cross_se,
                    lambda_product: lambdas[a] * lambdas[b],
                    passes: corr.abs() < th.corr_max,
                });
            }
        }
        strata.push(StratumReport {
            regime: label,
            reps: reps.len(),
            eta,
            regions,
            pairs,
        });
    }
    let passes = !degenerate
        && strata
            .iter()
            .all(|s| s.regions.iter().all(|r| r.passes) && s.pairs.iter().all(|p| p.passes));
    Ok(LimitReport {
        rule,
        a_n: run.a_n,
        x: run.x,
        thresholds: th,
        degenerate,
        ordering_violations: run.ordering_violations(),
        strata,
        passes,
    })
}

/// Simulates the counts and tests them under one cluster rule.
pub fn poisson_limit_test(spec: &LimitTestSpec, rule: ClusterRule) -> Result<LimitReport> {
    let run = simulate_counts(spec)?;
    limit_report(spec, &run, rule)
}

/// Per-replication disagreement `|N_n(C) - Ñ_n(C)|` between the two rules.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleAgreement {
    pub reps: usize,
    pub differing_fraction: f64,
    pub mean_abs_diff: f64,
    pub max_abs_diff: usize,
}

pub fn rule_agreement_from(run: &CountRun) -> RuleAgreement {
    let diffs: Vec<usize> = run.reps.iter().map(|r| r.total_box.abs_diff(r.total_proximity)).collect();
    let n = diffs.len().max(1) as f64;
    RuleAgreement {
        reps: diffs.len(),
        differing_fraction: diffs.iter().filter(|&&d| d > 0).count() as f64 / n,
        mean_abs_diff: diffs.iter().sum::<usize>() as f64 / n,
        max_abs_diff: diffs.iter().copied().max().unwrap_or(0),
    }
}

pub fn rule_agreement(spec: &LimitTestSpec) -> Result<RuleAgreement> {
    Ok(rule_agreement_from(&simulate_counts(spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{LevelRule, ZModel};
    use crate::geometry::{IndexSetGeometry, ShapeC};
    use crate::sim::KernelPsi;
    use crate::tailmodels::{TailModel, VolModelY};

    fn spec(level: LevelRule, eta: Vec<EtaValue>) -> LimitTestSpec {
        let geom = IndexSetGeometry::build(ShapeC::unit_box(1).unwrap(), vec![1000.0], vec![20], None).unwrap();
        let plan = ReplicationPlan::new(
            150,
            ZModel::MovingAverage {
                kernel: KernelPsi::causal_1d(&[1.0, 0.5]).unwrap(),
                tail: TailModel::new(2.0, 1.0).unwrap(),
            },
            VolModelY::constant(1.0),
            geom,
            vec![1.0],
            5,
            level,
        )
        .unwrap();
        LimitTestSpec {
            plan,
            regions: vec![
                Region::Scaled(ShapeC::axis_box(vec![0.0], vec![0.5]).unwrap()),
                Region::Scaled(ShapeC::axis_box(vec![0.5], vec![1.0]).unwrap()),
            ],
            x: 1.0,
            eta,
            thresholds: LimitThresholds::default(),
            require_disjoint: true,
        }
    }

    fn eta(v: f64) -> Vec<EtaValue> {
        vec![EtaValue {
            regime: None,
            probability: 1.0,
            eta: v,
            se: 0.0,
        }]
    }

    #[test]
    fn unreachable_level_is_flagged_degenerate() {
        let s = spec(LevelRule::Fixed { a_n: 1e200 }, eta(0.8));
        let rep = poisson_limit_test(&s, ClusterRule::Box).unwrap();
        assert!(rep.degenerate);
        assert!(!rep.passes);
        assert!(rep.strata[0].regions.iter().all(|r| r.mean == 0.0 && r.gof.is_none()));
    }

    #[test]
    fn missing_eta_is_an_error() {
        let s = spec(LevelRule::Theoretical, vec![]);
        assert!(matches!(poisson_limit_test(&s, ClusterRule::Box), Err(Error::MissingEta(_))));
    }

    #[test]
    fn overlapping_regions_are_rejected() {
        let mut s = spec(LevelRule::Theoretical, eta(0.8));
        s.regions.push(Region::Scaled(ShapeC::axis_box(vec![0.25], vec![0.75]).unwrap()));
        assert!(simulate_counts(&s).is_err());
    }

    #[test]
    fn proximity_never_exceeds_box_counts() {
        let s = spec(LevelRule::Theoretical, eta(0.8));
        let run = simulate_counts(&s).unwrap();
        assert_eq!(run.ordering_violations(), 0);
        let agree = rule_agreement_from(&run);
        assert_eq!(agree.reps, 150);
        let rep = limit_report(&s, &run, ClusterRule::Proximity).unwrap();
        let m = rep.strata[0].regions[0].mean;
        assert!((m - 0.4).abs() < 0.2, "{m}");
    }
}
