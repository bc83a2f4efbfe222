//! Experiment runners: each turns a configuration into a [`ResultRecord`].

use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use svfield::clusters::ClusterRule;
use svfield::estimators::{empirical_spectral_measure, hill_estimator, ReplicationPlan, RUNS};
use svfield::geometry::geometry_schedule;
use svfield::limits::{limit_report, rule_agreement_from, simulate_counts, LimitReport, LimitTestSpec};
use svfield::parallel::map_indexed;
use svfield::rng::{StreamKey, STREAM_SPECTRAL, STREAM_THEORY};
use svfield::sim::simulate_garch;
use svfield::theory::{
    breiman_constant, garch_eta, garch_eta_sweep, garch_tail_index, garch_tail_index_mc, ma_extremal_index,
    ma_spectral_atoms, EtaValue,
};

use crate::config::{Experiment, ExperimentConfig, ResolvedModel};
use crate::record::{Check, ResultRecord, Table};
use crate::CliError;

/// What an experiment produced, before it is wrapped into a record.
struct Outcome {
    outputs: Value,
    table: Table,
    extra: Vec<Table>,
    checks: Vec<Check>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Other(e.to_string()))
}

fn theory_key(cfg: &ExperimentConfig) -> StreamKey {
    StreamKey::new(cfg.seed, STREAM_THEORY)
}

fn plan(cfg: &ExperimentConfig, model: &ResolvedModel) -> Result<ReplicationPlan, CliError> {
    Ok(ReplicationPlan::new(
        cfg.plan.replications,
        model.z.clone(),
        model.y.clone(),
        cfg.geometry()?,
        cfg.plan.thresholds.clone(),
        cfg.seed,
        cfg.level(&model.z),
    )?)
}

fn sweep_radii(radii: &[i64]) -> Result<Vec<usize>, CliError> {
    if radii.is_empty() {
        return Err(CliError::Validation("the radius list must not be empty".into()));
    }
    radii
        .iter()
        .map(|&m| usize::try_from(m).map_err(|_| CliError::Validation(format!("radius m must be non-negative, got {m}"))))
        .collect()
}

/// Extremal functional per regime from the closed form (moving average) or
/// the direct Monte Carlo evaluation (GARCH).
fn theory_eta(cfg: &ExperimentConfig, model: &ResolvedModel) -> Result<Vec<EtaValue>, CliError> {
    if let Some((kernel, tail)) = model.kernel_tail() {
        let report = ma_extremal_index(kernel, &model.y, tail, cfg.plan.samples, theory_key(cfg), &[])?;
        return Ok(report
            .entries
            .iter()
            .map(|e| EtaValue {
                regime: e.regime,
                probability: e.probability,
                eta: e.eta,
                se: e.eta_se,
            })
            .collect());
    }
    let (params, _, alpha_hat) = model.garch().expect("garch model");
    let m = sweep_radii(&[cfg.plan.m])?[0];
    Ok(garch_eta(
        params,
        &model.y,
        cfg.plan.k_trunc,
        m,
        model.exponent.kappa(alpha_hat),
        cfg.plan.samples,
        theory_key(cfg),
    )?)
}

#[derive(Serialize)]
struct SimRow {
    replication: u64,
    regime: Option<f64>,
    max: f64,
    mean: f64,
    exceedances: usize,
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let plan = plan(cfg, &model)?;
    let geom = plan.geometry();
    let a_n = plan.a_n()?;
    let rows = map_indexed(plan.replications(), |r| -> Result<SimRow, CliError> {
        let x = plan.simulate_x(r)?;
        let vals: Vec<f64> = geom.sites().map(|v| x.get(&v).expect("inside")).collect();
        Ok(SimRow {
            replication: r,
            regime: x.meta().regime,
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            exceedances: vals.iter().filter(|&&v| v > a_n).count(),
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let first = plan.simulate_x(0)?;
    let mut field = Table {
        name: "field".into(),
        headers: (0..geom.dim()).map(|l| format!("v{l}")).chain(["x".to_string()]).collect(),
        rows: Vec::new(),
    };
    for v in geom.sites() {
        let mut line: Vec<Value> = v.iter().map(|&c| Value::from(c)).collect();
        line.push(json!(first.get(&v).expect("inside")));
        field.rows.push(line);
    }
    Ok(Outcome {
        outputs: json!({ "a_n": a_n, "n_sites": geom.size(), "window": plan.simulation_window() }),
        table: Table::from_rows("replications", &rows)?,
        extra: vec![field],
        checks: Vec::new(),
    })
}

#[derive(Serialize)]
struct GarchSweepRow {
    m: i64,
    regime: Option<f64>,
    eta: f64,
    se: f64,
    stable: bool,
    theta: f64,
}

fn eta_theory(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    if let Some((kernel, tail)) = model.kernel_tail() {
        let report = ma_extremal_index(kernel, &model.y, tail, cfg.plan.samples, theory_key(cfg), &cfg.plan.m_sweep)?;
        return Ok(Outcome {
            outputs: to_value(&report)?,
            table: Table::from_rows("eta", &report.entries)?,
            extra: vec![Table::from_rows("sweep", &report.sweep)?],
            checks: Vec::new(),
        });
    }
    let (params, _, alpha_hat) = model.garch().expect("garch model");
    let index = garch_tail_index(params, 1e-12)?;
    let kappa = model.exponent.kappa(alpha_hat);
    let radii = sweep_radii(&cfg.plan.m_sweep)?;
    let sweep = garch_eta_sweep(params, &model.y, cfg.plan.k_trunc, &radii, kappa, cfg.plan.samples, theory_key(cfg))?;
    let rows = sweep
        .iter()
        .map(|r| {
            let y = match r.regime {
                Some(s) => model.y.conditioned_on(s)?,
                None => model.y.clone(),
            };
            Ok(GarchSweepRow {
                m: r.m,
                regime: r.regime,
                eta: r.eta,
                se: r.se,
                stable: r.stable,
                theta: r.eta / breiman_constant(&y, kappa, 1.0)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Outcome {
        outputs: json!({ "index": index, "kappa": kappa, "sweep": to_value(&sweep)? }),
        table: Table::from_rows("sweep", &rows)?,
        extra: Vec::new(),
        checks: Vec::new(),
    })
}

fn eta_estimate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let plan = plan(cfg, &model)?;
    let (table, stats) = plan.estimate_all()?;
    let theory = theory_eta(cfg, &model)?;
    let mut checks = Vec::new();
    for t in &theory {
        if let Some(row) = table.find(RUNS, 1.0, t.regime) {
            let se = (row.se * row.se + t.se * t.se).sqrt();
            let diff = (row.estimate - t.eta).abs();
            let label = t.regime.map_or("pooled".to_string(), |s| format!("regime {s}"));
            checks.push(Check::new(
                "runs-vs-theory",
                diff <= 3.0 * se,
                format!("{label}: runs {:.4} vs eta {:.4}, |diff| {:.4}, 3 se {:.4}", row.estimate, t.eta, diff, 3.0 * se),
            ));
        }
    }
    Ok(Outcome {
        outputs: json!({
            "a_n": stats.a_n,
            "n_sites": plan.geometry().size(),
            "theory": to_value(&theory)?,
            "runs_skipped": stats.reps.iter().map(|s| s.runs_skipped).sum::<u64>(),
        }),
        table: Table::from_rows("estimates", &table.rows)?,
        extra: vec![Table::from_rows("replications", &stats.reps)?],
        checks,
    })
}

fn spectral(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let (kernel, tail) = model
        .kernel_tail()
        .ok_or_else(|| CliError::Validation("spectral needs a moving-average model".into()))?;
    let atoms = ma_spectral_atoms(kernel, cfg.plan.m, tail.alpha(), tail.p_xi())?;
    let report = empirical_spectral_measure(
        kernel,
        tail,
        &atoms,
        cfg.plan.quantile,
        cfg.plan.windows,
        StreamKey::new(cfg.seed, STREAM_SPECTRAL),
    )?;
    let check = Check::new(
        "spectral-tv",
        report.tv < cfg.plan.tv_max,
        format!("tv {:.4} against {}", report.tv, cfg.plan.tv_max),
    );
    Ok(Outcome {
        outputs: json!({
            "kept": report.kept,
            "threshold": report.threshold,
            "unmatched": report.unmatched,
            "tv": report.tv,
            "atoms": to_value(&atoms)?,
        }),
        table: Table::from_rows("bins", &report.bins)?,
        extra: Vec::new(),
        checks: vec![check],
    })
}

fn limit_spec(cfg: &ExperimentConfig, model: &ResolvedModel, eta: Vec<EtaValue>) -> Result<LimitTestSpec, CliError> {
    Ok(LimitTestSpec {
        plan: plan(cfg, model)?,
        regions: cfg.regions()?,
        x: cfg.plan.x,
        eta,
        thresholds: cfg.plan.limits.thresholds(),
        require_disjoint: cfg.plan.require_disjoint,
    })
}

fn clusters(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let spec = limit_spec(cfg, &model, Vec::new())?;
    let run = simulate_counts(&spec)?;
    let agreement = rule_agreement_from(&run);
    let violations = run.ordering_violations();
    Ok(Outcome {
        outputs: json!({ "a_n": run.a_n, "x": run.x, "agreement": to_value(&agreement)?, "ordering_violations": violations }),
        table: Table::from_rows("counts", &run.reps)?,
        extra: Vec::new(),
        checks: vec![Check::new(
            "proximity-not-above-box",
            violations == 0,
            format!("{violations} replications with more proximity than box clusters"),
        )],
    })
}

#[derive(Serialize)]
struct LimitRow {
    rule: ClusterRule,
    regime: Option<f64>,
    region: usize,
    fraction: f64,
    lambda: f64,
    mean: f64,
    se: f64,
    dispersion: Option<f64>,
    p_value: Option<f64>,
    passes: bool,
}

fn limit_rows(report: &LimitReport) -> Vec<LimitRow> {
    report
        .strata
        .iter()
        .flat_map(|s| {
            s.regions.iter().map(move |r| LimitRow {
                rule: report.rule,
                regime: s.regime,
                region: r.region,
                fraction: r.fraction,
                lambda: r.lambda,
                mean: r.mean,
                se: r.se,
                dispersion: r.gof.as_ref().map(|g| g.dispersion),
                p_value: r.gof.as_ref().map(|g| g.p_value),
                passes: r.passes,
            })
        })
        .collect()
}

fn limit_test(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let index = model.z.index();
    let eta = match cfg.plan.eta {
        Some(eta1) => model
            .y
            .regimes()
            .into_iter()
            .map(|(s, q)| EtaValue {
                regime: model.y.is_regime().then_some(s),
                probability: q,
                eta: s.powf(index) * eta1,
                se: 0.0,
            })
            .collect(),
        None => theory_eta(cfg, &model)?,
    };
    let spec = limit_spec(cfg, &model, eta)?;
    let run = simulate_counts(&spec)?;
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    for rule in [ClusterRule::Box, ClusterRule::Proximity] {
        let report = limit_report(&spec, &run, rule)?;
        rows.extend(limit_rows(&report));
        for s in &report.strata {
            for p in &s.pairs {
                pairs.push(json!({ "rule": rule, "regime": s.regime, "pair": p }));
            }
        }
        checks.push(Check::new(
            "poisson-limit",
            report.passes,
            format!("{rule:?} rule, degenerate: {}", report.degenerate),
        ));
        reports.push(report);
    }
    let violations = run.ordering_violations();
    checks.push(Check::new(
        "proximity-not-above-box",
        violations == 0,
        format!("{violations} violating replications"),
    ));
    Ok(Outcome {
        outputs: json!({
            "reports": to_value(&reports)?,
            "agreement": to_value(&rule_agreement_from(&run))?,
            "threshold_note": "pass/fail thresholds are engineering choices",
        }),
        table: Table::from_rows("regions", &rows)?,
        extra: vec![Table::from_rows("pairs", &pairs)?, Table::from_rows("counts", &run.reps)?],
        checks,
    })
}

#[derive(Serialize)]
struct IndexRow {
    method: &'static str,
    alpha_hat: f64,
    se: Option<f64>,
    detail: Option<f64>,
}

fn garch_index(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let (params, burn_in, _) = model
        .garch()
        .ok_or_else(|| CliError::Validation("garch-index needs a GARCH model".into()))?;
    let q = garch_tail_index(params, 1e-12)?;
    let mut rows = vec![IndexRow {
        method: "quadrature",
        alpha_hat: q.alpha_hat,
        se: None,
        detail: Some(q.residual),
    }];
    let mut checks = vec![Check::new(
        "quadrature-residual",
        q.residual.abs() < 1e-6,
        format!("E A^alpha_hat - 1 = {:e}", q.residual),
    )];
    if let Some(n) = cfg.plan.mc_samples {
        let mc = garch_tail_index_mc(params, n, theory_key(cfg))?;
        checks.push(Check::new(
            "mc-agreement",
            (mc.alpha_hat - q.alpha_hat).abs() <= 3.0 * mc.se,
            format!("mc {:.5} +- {:.5}", mc.alpha_hat, mc.se),
        ));
        rows.push(IndexRow {
            method: "monte-carlo",
            alpha_hat: mc.alpha_hat,
            se: Some(mc.se),
            detail: Some(n as f64),
        });
    }
    if let Some(steps) = cfg.plan.hill_steps {
        let z = simulate_garch(params, steps, burn_in, StreamKey::new(cfg.seed, svfield::rng::STREAM_NOISE))?;
        let k = ((steps as f64) * cfg.plan.hill_fraction).round() as usize;
        let hill = hill_estimator(z.values(), k)?;
        let target = q.z_index();
        checks.push(Check::new(
            "hill-within-20pct",
            (hill - target).abs() <= 0.2 * target,
            format!("hill {hill:.3} vs 2 alpha_hat {target:.3}"),
        ));
        rows.push(IndexRow {
            method: "hill",
            alpha_hat: hill / 2.0,
            se: None,
            detail: Some(k as f64),
        });
    }
    Ok(Outcome {
        outputs: to_value(&q)?,
        table: Table::from_rows("index", &rows)?,
        extra: Vec::new(),
        checks,
    })
}

fn geometry_check(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let geom = cfg.geometry()?;
    let main = geom.diagnostic_row();
    let schedule: Vec<(Vec<f64>, Vec<i64>)> = cfg
        .geometry_section()?
        .schedule
        .iter()
        .map(|e| (e.c_n.clone(), e.t_n.clone()))
        .collect();
    let mut rows = vec![main.clone()];
    rows.extend(geometry_schedule(&cfg.shape()?, &schedule)?);
    Ok(Outcome {
        outputs: json!({ "ratio": main.ratio, "size": main.size, "volume": cfg.shape()?.volume() }),
        table: Table::from_rows("geometry", &rows)?,
        extra: Vec::new(),
        checks: Vec::new(),
    })
}

/// Runs `experiment` on a dedicated pool of `config.threads` workers.
pub fn execute(experiment: Experiment, config: &ExperimentConfig) -> Result<(ResultRecord, Vec<Table>), CliError> {
    if let Some(declared) = config.experiment {
        if declared != experiment {
            return Err(CliError::Validation(format!(
                "config declares experiment `{}` but `{}` was requested",
                declared.name(),
                experiment.name()
            )));
        }
    }
    if config.threads == 0 {
        return Err(CliError::Validation("threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let start = Instant::now();
    let outcome = pool.install(|| match experiment {
        Experiment::Simulate => simulate(config),
        Experiment::EtaTheory => eta_theory(config),
        Experiment::EtaEstimate => eta_estimate(config),
        Experiment::Spectral => spectral(config),
        Experiment::Clusters => clusters(config),
        Experiment::LimitTest => limit_test(config),
        Experiment::GarchIndex => garch_index(config),
        Experiment::GeometryCheck => geometry_check(config),
    })?;
    let record = ResultRecord {
        experiment: experiment.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        outputs: outcome.outputs,
        table: outcome.table,
        checks: outcome.checks,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((record, outcome.extra))
}
