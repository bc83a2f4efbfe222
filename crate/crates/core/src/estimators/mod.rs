//! Empirical counterparts of the limit theory: max-CDF, blocks and runs
//! estimators of `eta`, the empirical spectral measure, spatial ergodic
//! averages and the window tail check.

mod ergodic;
mod spectral;

pub use ergodic::{ergodic_average, max_window_tail_check, LocalView, WindowTailCheck};
pub use spectral::{empirical_spectral_measure, SpectralBin, SpectralReport, ATOM_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::IndexSetGeometry;
use crate::lattice::{LatticeBox, Site};
use crate::parallel::map_indexed;
use crate::rng::{StreamKey, STREAM_NOISE, STREAM_Y};
use crate::sim::{product_field, simulate_garch_on, simulate_ma, FieldSample, GarchParams, KernelPsi};
use crate::tailmodels::{sample_y_field, TailModel, VolModelY};
use crate::theory::NormingSequence;

/// Law of the volatility field `Z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ZModel {
    MovingAverage { kernel: KernelPsi, tail: TailModel },
    /// `alpha_hat` is the root of `E A^kappa = 1`; `Z` has index `2 alpha_hat`.
    Garch { params: GarchParams, burn_in: usize, alpha_hat: f64 },
}

impl ZModel {
    pub fn dim(&self) -> usize {
        match self {
            ZModel::MovingAverage { kernel, .. } => kernel.dim(),
            ZModel::Garch { .. } => 1,
        }
    }

    /// Regular-variation index of `Z`.
    pub fn index(&self) -> f64 {
        match self {
            ZModel::MovingAverage { tail, .. } => tail.alpha(),
            ZModel::Garch { alpha_hat, .. } => 2.0 * alpha_hat,
        }
    }

    pub fn simulate(&self, window: &LatticeBox, key: StreamKey) -> Result<FieldSample> {
        match self {
            ZModel::MovingAverage { kernel, tail } => simulate_ma(kernel, tail, window, key),
            ZModel::Garch { params, burn_in, .. } => simulate_garch_on(params, window, *burn_in, key),
        }
    }

    /// Closed-form norming where the tail constant is known exactly.
    pub fn norming(&self) -> Option<NormingSequence> {
        match self {
            ZModel::MovingAverage { kernel, tail } => {
                NormingSequence::moving_average(kernel, tail.alpha(), tail.p_xi()).ok()
            }
            ZModel::Garch { .. } => None,
        }
    }
}

/// How the level `a_n` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LevelRule {
    /// `a_n = (c |D_n|)^(1/index)` from the closed-form tail constant.
    Theoretical,
    /// `a_n` such that exactly `R` values of `Z` over `D_n`, pooled across the
    /// `R` replications, exceed it.
    Empirical,
    Fixed { a_n: f64 },
}

/// Independent replications of `X = Y Z` over a geometry.
#[derive(Debug, Clone)]
pub struct ReplicationPlan {
    replications: u64,
    z: ZModel,
    y: VolModelY,
    geometry: IndexSetGeometry,
    thresholds: Vec<f64>,
    base_seed: u64,
    level: LevelRule,
    sim_window: LatticeBox,
}

impl ReplicationPlan {
    pub fn new(
        replications: u64,
        z: ZModel,
        y: VolModelY,
        geometry: IndexSetGeometry,
        thresholds: Vec<f64>,
        base_seed: u64,
        level: LevelRule,
    ) -> Result<Self> {
        if replications < 1 {
            return Err(invalid("replications", "need at least one"));
        }
        if thresholds.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(invalid("thresholds", "must be positive"));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("thresholds", "must be strictly increasing"));
        }
        if z.dim() != geometry.dim() {
            return Err(Error::DimensionMismatch {
                expected: geometry.dim(),
                got: z.dim(),
            });
        }
        y.check_moment_order(z.index())?;
        match level {
            LevelRule::Theoretical if z.norming().is_none() => {
                return Err(invalid("level", "no closed-form norming for this model"));
            }
            LevelRule::Fixed { a_n } if !(a_n > 0.0) => {
                return Err(invalid("level", "a_n must be positive"));
            }
            _ => {}
        }
        let sim_window = simulation_window(&geometry);
        Ok(ReplicationPlan {
            replications,
            z,
            y,
            geometry,
            thresholds,
            base_seed,
            level,
            sim_window,
        })
    }

    pub fn replications(&self) -> u64 {
        self.replications
    }

    pub fn z(&self) -> &ZModel {
        &self.z
    }

    pub fn y(&self) -> &VolModelY {
        &self.y
    }

    pub fn geometry(&self) -> &IndexSetGeometry {
        &self.geometry
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn level(&self) -> LevelRule {
        self.level
    }

    /// Window on which each replication is simulated: `D_n` padded by `t_n`
    /// and extended to cover every J-box meeting `D_n`.
    pub fn simulation_window(&self) -> &LatticeBox {
        &self.sim_window
    }

    fn keys(&self, r: u64) -> (StreamKey, StreamKey) {
        (
            StreamKey::new(self.base_seed, STREAM_NOISE).replication(r),
            StreamKey::new(self.base_seed, STREAM_Y).replication(r),
        )
    }

    /// `Z` of replication `r` on the simulation window.
    pub fn simulate_z(&self, r: u64) -> Result<FieldSample> {
        self.z.simulate(&self.sim_window, self.keys(r).0)
    }

    /// `X = Y Z` of replication `r` on the simulation window.
    pub fn simulate_x(&self, r: u64) -> Result<FieldSample> {
        let (zk, yk) = self.keys(r);
        let z = self.z.simulate(&self.sim_window, zk)?;
        let y = sample_y_field(&self.y, &self.sim_window, yk)?;
        product_field(&y, &z)
    }

    /// The level `a_n` at `x = 1`.
    pub fn a_n(&self) -> Result<f64> {
        match self.level {
            LevelRule::Fixed { a_n } => Ok(a_n),
            LevelRule::Theoretical => Ok(self
                .z
                .norming()
                .expect("checked at construction")
                .a_n(self.geometry.size())),
            LevelRule::Empirical => self.calibrate_level(),
        }
    }

    /// The `(R+1)`-th largest value of `Z` over `D_n` pooled across the
    /// replications, so that exactly `R` pooled values exceed it.
    fn calibrate_level(&self) -> Result<f64> {
        let target = self.replications as usize + 1;
        let mask = self.geometry.mask();
        let dwin = self.geometry.window();
        let mut keep = 64usize.min(target);
        loop {
            let tops: Vec<Result<Vec<f64>>> = map_indexed(self.replications, |r| {
                let z = self.simulate_z(r)?;
                let mut vals: Vec<f64> = dwin
                    .sites()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(v, _)| z.get(&v).expect("inside"))
                    .collect();
                let k = keep.min(vals.len());
                if k < vals.len() {
                    vals.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
                    vals.truncate(k);
                }
                vals.sort_by(|a, b| b.total_cmp(a));
                Ok(vals)
            });
            let tops = tops.into_iter().collect::<Result<Vec<_>>>()?;
            let mut pooled: Vec<f64> = tops.iter().flatten().copied().collect();
            if pooled.len() < target {
                return Err(Error::SampleTooSmall {
                    needed: target,
                    got: pooled.len(),
                });
            }
            pooled.sort_by(|a, b| b.total_cmp(a));
            let level = pooled[target - 1];
            // a truncated list whose smallest kept value is still above the
            // level may hide further values above it
            let complete = tops.iter().all(|t| t.len() < keep || t[t.len() - 1] <= level);
            if complete || keep >= target {
                return Ok(level);
            }
            keep = (keep * 4).min(target);
        }
    }

    /// Per-replication statistics at level `a_n` (`x = 1` for blocks and runs,
    /// `a_n x` over the threshold grid for the maximum).
    pub fn replicate_stats(&self) -> Result<RunStats> {
        let a_n = self.a_n()?;
        let reps = map_indexed(self.replications, |r| self.stats_for(r, a_n));
        let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(RunStats { a_n, reps })
    }

    fn stats_for(&self, r: u64, a_n: f64) -> Result<RepStats> {
        let x = self.simulate_x(r)?;
        let regime = x.meta().regime;
        let geom = &self.geometry;
        let win = &self.sim_window;
        let values = x.values();
        let mut max = f64::NEG_INFINITY;
        let mut exceed: Vec<Site> = Vec::new();
        let mut exceedances = 0u64;
        for (i, v) in win.sites().enumerate() {
            let val = values[i];
            let in_d = geom.contains(&v);
            if in_d {
                max = max.max(val);
            }
            if val > a_n {
                if in_d {
                    exceedances += 1;
                }
                exceed.push(v);
            }
        }
        // blocks: boxes of the tiling with an exceedance anywhere in the box
        let grid = geom.box_grid();
        let t_star = geom.box_volume();
        let counts = geom.box_counts();
        let mut hit: Vec<usize> = exceed
            .iter()
            .filter_map(|v| grid.index_of(&geom.tiling().tile_of(v)))
            .collect();
        hit.sort_unstable();
        hit.dedup();
        let blocks_inner = hit.iter().filter(|&&j| counts[j] == t_star).count() as u64;
        let blocks_outer = hit.iter().filter(|&&j| counts[j] > 0).count() as u64;
        // runs: exceedances in D_n with no exceedance in A_v^n
        let t = geom.t_n();
        let mut runs = 0u64;
        let mut skipped = 0u64;
        for (i, v) in exceed.iter().enumerate() {
            if !geom.contains(v) {
                continue;
            }
            let reach: Vec<i64> = v.iter().zip(t).map(|(a, b)| a + b).collect();
            let low: Vec<i64> = v.iter().zip(t).map(|(a, b)| a - b).collect();
            if !(win.contains(&reach) && win.contains(&low)) {
                skipped += 1;
                continue;
            }
            let mut followed = false;
            for w in &exceed[i + 1..] {
                if w[0] - v[0] > t[0] {
                    break;
                }
                if w.iter().zip(v).zip(t).all(|((a, b), tl)| (a - b).abs() <= *tl) {
                    followed = true;
                    break;
                }
            }
            if !followed {
                runs += 1;
            }
        }
        Ok(RepStats {
            regime,
            max,
            exceedances,
            blocks_inner,
            blocks_outer,
            runs,
            runs_skipped: skipped,
        })
    }

    /// Max-CDF, blocks and runs estimates from one set of replications.
    pub fn estimate_all(&self) -> Result<(EstimateTable, RunStats)> {
        let stats = self.replicate_stats()?;
        let table = estimate_table(&stats, &self.thresholds, self.geometry.size());
        Ok((table, stats))
    }
}

/// Bounding box of `D_n` padded by `t_n` and of all J-boxes meeting `D_n`.
fn simulation_window(geom: &IndexSetGeometry) -> LatticeBox {
    let padded = geom.window().expand(geom.t_n());
    let grid = geom.box_grid();
    let first = geom.tiling().tile(grid.lo());
    let last_z: Vec<i64> = grid.hi().iter().map(|h| h - 1).collect();
    let last = geom.tiling().tile(&last_z);
    let lo = (0..geom.dim())
        .map(|l| padded.lo()[l].min(first.lo()[l]))
        .collect();
    let hi = (0..geom.dim())
        .map(|l| padded.hi()[l].max(last.hi()[l]))
        .collect();
    LatticeBox::new(lo, hi).expect("ordered")
}

/// Statistics of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepStats {
    pub regime: Option<f64>,
    /// `max_{v ∈ D_n} X_v`.
    pub max: f64,
    /// Sites of `D_n` with `X_v > a_n`.
    pub exceedances: u64,
    /// Boxes of `P_n` with an exceedance.
    pub blocks_inner: u64,
    /// Boxes of `Q_n` with an exceedance anywhere in the box.
    pub blocks_outer: u64,
    /// Sites `v ∈ D_n` with `X_v > a_n` and no exceedance in `A_v^n`.
    pub runs: u64,
    pub runs_skipped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub a_n: f64,
    pub reps: Vec<RepStats>,
}

/// One estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub estimator: String,
    pub x: f64,
    pub estimate: f64,
    pub se: f64,
    pub reps: u64,
    pub n_sites: usize,
    /// Regime stratum; `None` for the pooled estimate.
    pub regime: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EstimateTable {
    pub rows: Vec<EstimateRow>,
}

impl EstimateTable {
    pub fn find(&self, estimator: &str, x: f64, regime: Option<f64>) -> Option<&EstimateRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.x == x && r.regime == regime)
    }

    pub fn by_estimator<'a>(&'a self, estimator: &'a str) -> impl Iterator<Item = &'a EstimateRow> + 'a {
        self.rows.iter().filter(move |r| r.estimator == estimator)
    }
}

pub const MAX_CDF: &str = "max-cdf";
pub const BLOCKS: &str = "blocks";
pub const BLOCKS_OUTER: &str = "blocks-outer";
pub const RUNS: &str = "runs";
/// Runs count divided by the exceedance count, with a ratio standard error.
pub const RUNS_RATIO: &str = "runs-ratio";

fn mean_sd_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn stratum_rows(reps: &[&RepStats], a_n: f64, thresholds: &[f64], n_sites: usize, regime: Option<f64>) -> Vec<EstimateRow> {
    let r = reps.len() as u64;
    let row = |estimator: &str, x: f64, (estimate, se): (f64, f64)| EstimateRow {
        estimator: estimator.to_string(),
        x,
        estimate,
        se,
        reps: r,
        n_sites,
        regime,
    };
    let mut rows = Vec::new();
    for &x in thresholds {
        let ind: Vec<f64> = reps
            .iter()
            .map(|s| if s.max <= a_n * x { 1.0 } else { 0.0 })
            .collect();
        rows.push(row(MAX_CDF, x, mean_sd_se(&ind)));
    }
    let col = |f: fn(&RepStats) -> u64| -> Vec<f64> { reps.iter().map(|s| f(s) as f64).collect() };
    rows.push(row(BLOCKS, 1.0, mean_sd_se(&col(|s| s.blocks_inner))));
    rows.push(row(BLOCKS_OUTER, 1.0, mean_sd_se(&col(|s| s.blocks_outer))));
    rows.push(row(RUNS, 1.0, mean_sd_se(&col(|s| s.runs))));
    let c = col(|s| s.runs);
    let e = col(|s| s.exceedances);
    let se_sum: f64 = e.iter().sum();
    let ratio = if se_sum > 0.0 {
        let theta = c.iter().sum::<f64>() / se_sum;
        let resid: f64 = c.iter().zip(&e).map(|(ci, ei)| (ci - theta * ei).powi(2)).sum();
        (theta, resid.sqrt() / se_sum)
    } else {
        (f64::NAN, f64::NAN)
    };
    rows.push(row(RUNS_RATIO, 1.0, ratio));
    rows
}

/// Pooled rows, followed by one block of rows per regime stratum when the
/// replications carry regime labels.
pub fn estimate_table(stats: &RunStats, thresholds: &[f64], n_sites: usize) -> EstimateTable {
    let all: Vec<&RepStats> = stats.reps.iter().collect();
    let mut rows = stratum_rows(&all, stats.a_n, thresholds, n_sites, None);
    let mut labels: Vec<f64> = stats.reps.iter().filter_map(|s| s.regime).collect();
    labels.sort_by(f64::total_cmp);
    labels.dedup();
    for s in labels {
        let stratum: Vec<&RepStats> = stats.reps.iter().filter(|r| r.regime == Some(s)).collect();
        rows.extend(stratum_rows(&stratum, stats.a_n, thresholds, n_sites, Some(s)));
    }
    EstimateTable { rows }
}

fn filtered(plan: &ReplicationPlan, keep: &[&str]) -> Result<EstimateTable> {
    let (table, _) = plan.estimate_all()?;
    Ok(EstimateTable {
        rows: table
            .rows
            .into_iter()
            .filter(|r| keep.contains(&r.estimator.as_str()))
            .collect(),
    })
}

/// Fraction of replications with `max_{D_n} X <= a_n x` for each threshold,
/// pooled and per regime.
pub fn empirical_max_cdf(plan: &ReplicationPlan) -> Result<EstimateTable> {
    filtered(plan, &[MAX_CDF])
}

/// Mean number of boxes with an `a_n`-exceedance, over `P_n` and over `Q_n`.
pub fn blocks_estimator_eta(plan: &ReplicationPlan) -> Result<EstimateTable> {
    filtered(plan, &[BLOCKS, BLOCKS_OUTER])
}

/// Mean number of `a_n`-exceedances not followed by another within `A_v^n`.
pub fn runs_estimator_eta(plan: &ReplicationPlan) -> Result<EstimateTable> {
    filtered(plan, &[RUNS, RUNS_RATIO])
}

/// Hill estimate of the tail index from the `k` largest values.
pub fn hill_estimator(values: &[f64], k: usize) -> Result<f64> {
    if k < 1 || k >= values.len() {
        return Err(Error::SampleTooSmall {
            needed: k + 1,
            got: values.len(),
        });
    }
    let mut v: Vec<f64> = values.to_vec();
    v.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let reference = v[k];
    if !(reference > 0.0) {
        return Err(Error::Domain("Hill estimator needs positive order statistics".into()));
    }
    let mean_log: f64 = v[..k].iter().map(|x| (x / reference).ln()).sum::<f64>() / k as f64;
    Ok(1.0 / mean_log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeC;

    fn ma_plan(kernel: &[f64], n: f64, t: i64, reps: u64, seed: u64) -> ReplicationPlan {
        let geom = IndexSetGeometry::build(ShapeC::unit_box(1).unwrap(), vec![n], vec![t], None).unwrap();
        ReplicationPlan::new(
            reps,
            ZModel::MovingAverage {
                kernel: KernelPsi::causal_1d(kernel).unwrap(),
                tail: TailModel::new(2.0, 1.0).unwrap(),
            },
            VolModelY::constant(1.0),
            geom,
            vec![1.0, 1e3],
            seed,
            LevelRule::Theoretical,
        )
        .unwrap()
    }

    #[test]
    fn simulation_window_covers_padding_and_outer_boxes() {
        let p = ma_plan(&[1.0], 10.0, 3, 1, 0);
        assert_eq!(p.simulation_window(), &LatticeBox::new(vec![-3], vec![13]).unwrap());
    }

    #[test]
    fn runs_and_blocks_on_a_hand_built_field() {
        let geom = IndexSetGeometry::build(ShapeC::unit_box(1).unwrap(), vec![9.0], vec![3], None).unwrap();
        let plan = ReplicationPlan::new(
            1,
            ZModel::MovingAverage {
                kernel: KernelPsi::identity(1),
                tail: TailModel::new(2.0, 1.0).unwrap(),
            },
            VolModelY::constant(1.0),
            geom,
            vec![1.0],
            3,
            LevelRule::Fixed { a_n: 1e300 },
        )
        .unwrap();
        let s = plan.stats_for(0, 1e300).unwrap();
        assert_eq!((s.exceedances, s.blocks_inner, s.runs), (0, 0, 0));
        // with a level below every value each box and only the last site count
        let s = plan.stats_for(0, 0.5).unwrap();
        assert_eq!(s.exceedances, 9);
        assert_eq!(s.blocks_inner, 3);
        assert_eq!(s.blocks_outer, 3);
        // padding sites after D_n also exceed, so no run ends inside D_n
        assert_eq!(s.runs, 0);
    }

    #[test]
    fn far_threshold_gives_cdf_one_and_strata_mix_exactly() {
        let p = ma_plan(&[1.0, 0.5], 2000.0, 50, 200, 7);
        let (table, stats) = p.estimate_all().unwrap();
        assert_eq!(table.find(MAX_CDF, 1e3, None).unwrap().estimate, 1.0);
        assert_eq!(stats.reps.len(), 200);
        let blocks = table.find(BLOCKS, 1.0, None).unwrap();
        assert!(blocks.estimate > 0.3 && blocks.estimate < 1.5, "{blocks:?}");
    }

    #[test]
    fn empirical_level_leaves_exactly_r_exceedances() {
        let geom = IndexSetGeometry::build(ShapeC::unit_box(1).unwrap(), vec![500.0], vec![10], None).unwrap();
        let plan = ReplicationPlan::new(
            300,
            ZModel::Garch {
                params: GarchParams::new(0.1, 0.1, 0.85).unwrap(),
                burn_in: 500,
                alpha_hat: 4.5,
            },
            VolModelY::constant(1.0),
            geom,
            vec![1.0],
            11,
            LevelRule::Empirical,
        )
        .unwrap();
        let stats = plan.replicate_stats().unwrap();
        let total: u64 = stats.reps.iter().map(|s| s.exceedances).sum();
        assert_eq!(total, 300);
    }

    #[test]
    fn hill_on_exact_pareto_sample() {
        let tail = TailModel::new(3.0, 1.0).unwrap();
        let xs = crate::tailmodels::sample_xi(&tail, 200_000, StreamKey::new(1, 9));
        let h = hill_estimator(&xs, 2000).unwrap();
        assert!((h - 3.0).abs() < 0.25, "{h}");
        assert!(hill_estimator(&xs[..10], 10).is_err());
    }
}
