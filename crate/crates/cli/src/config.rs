//! Experiment configuration in TOML. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svfield::estimators::{LevelRule, ZModel};
use svfield::geometry::{IndexSetGeometry, Region, ShapeC};
use svfield::limits::LimitThresholds;
use svfield::sim::DEFAULT_BURN_IN;
use svfield::theory::{garch_tail_index, GarchExponent, DEFAULT_SWEEP};
use svfield::{GarchParams, KernelPsi, TailModel, VolModelY, YKind};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    EtaTheory,
    EtaEstimate,
    Spectral,
    Clusters,
    LimitTest,
    GarchIndex,
    GeometryCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::EtaTheory => "eta-theory",
            Experiment::EtaEstimate => "eta-estimate",
            Experiment::Spectral => "spectral",
            Experiment::Clusters => "clusters",
            Experiment::LimitTest => "limit-test",
            Experiment::GarchIndex => "garch-index",
            Experiment::GeometryCheck => "geometry-check",
        }
    }
}

fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub z: ZConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<YKind>,
    /// Order of the moment diagnostic on `Y`; defaults to the tail index plus one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTap {
    pub offset: Vec<i64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ZConfig {
    MovingAverage {
        alpha: f64,
        p_xi: f64,
        kernel: Vec<KernelTap>,
    },
    Garch {
        alpha0: f64,
        alpha1: f64,
        beta1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        burn_in: Option<usize>,
        #[serde(default)]
        exponent: GarchExponent,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeConfig {
    UnitBox { dim: usize },
    Disc { center: [f64; 2], radius: f64 },
    BoxUnion { dim: usize, boxes: Vec<BoxConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub c_n: Vec<f64>,
    pub t_n: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub shape: ShapeConfig,
    pub c_n: Vec<f64>,
    pub t_n: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_n: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitConfig {
    pub dispersion: [f64; 2],
    pub p_min: f64,
    pub corr_max: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        let t = LimitThresholds::default();
        LimitConfig {
            dispersion: [t.dispersion.0, t.dispersion.1],
            p_min: t.p_min,
            corr_max: t.corr_max,
        }
    }
}

impl LimitConfig {
    pub fn thresholds(&self) -> LimitThresholds {
        LimitThresholds {
            dispersion: (self.dispersion[0], self.dispersion[1]),
            p_min: self.p_min,
            corr_max: self.corr_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    pub replications: u64,
    pub thresholds: Vec<f64>,
    /// Defaults to the closed-form norming for moving averages and to the
    /// empirical level for GARCH.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<LevelRule>,
    pub m: i64,
    pub m_sweep: Vec<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_trunc: Option<f64>,
    /// Monte Carlo sample size for theoretical expectations.
    pub samples: u64,
    pub quantile: f64,
    pub windows: u64,
    pub tv_max: f64,
    pub x: f64,
    /// Scaled boxes inside `C`; the whole of `C` when empty.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<BoxConfig>,
    pub require_disjoint: bool,
    /// Overrides the theoretical extremal functional in limit tests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub limits: LimitConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hill_steps: Option<usize>,
    pub hill_fraction: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            replications: 100,
            thresholds: vec![1.0],
            level: None,
            m: 1,
            m_sweep: DEFAULT_SWEEP.to_vec(),
            k_trunc: None,
            samples: 100_000,
            quantile: 0.999,
            windows: 100_000,
            tv_max: 0.05,
            x: 1.0,
            regions: Vec::new(),
            require_disjoint: true,
            eta: None,
            limits: LimitConfig::default(),
            mc_samples: None,
            hill_steps: None,
            hill_fraction: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            csv: true,
        }
    }
}

/// The model section resolved into core types.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub z: ZModel,
    pub y: VolModelY,
    pub exponent: GarchExponent,
}

impl ResolvedModel {
    pub fn kernel_tail(&self) -> Option<(&KernelPsi, &TailModel)> {
        match &self.z {
            ZModel::MovingAverage { kernel, tail } => Some((kernel, tail)),
            ZModel::Garch { .. } => None,
        }
    }

    pub fn garch(&self) -> Option<(&GarchParams, usize, f64)> {
        match &self.z {
            ZModel::Garch {
                params,
                burn_in,
                alpha_hat,
            } => Some((params, *burn_in, *alpha_hat)),
            ZModel::MovingAverage { .. } => None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Other(e.to_string()))
    }

    pub fn model(&self) -> Result<ResolvedModel, CliError> {
        let m = self
            .model
            .as_ref()
            .ok_or_else(|| CliError::Validation("missing [model] section".into()))?;
        let (z, exponent) = match &m.z {
            ZConfig::MovingAverage { alpha, p_xi, kernel } => {
                let dim = kernel.first().map(|t| t.offset.len()).unwrap_or(1);
                let kernel = KernelPsi::new(dim, kernel.iter().map(|t| (t.offset.clone(), t.value)).collect())?;
                let tail = TailModel::new(*alpha, *p_xi)?;
                (ZModel::MovingAverage { kernel, tail }, GarchExponent::default())
            }
            ZConfig::Garch {
                alpha0,
                alpha1,
                beta1,
                burn_in,
                exponent,
            } => {
                let params = GarchParams::new(*alpha0, *alpha1, *beta1)?;
                let alpha_hat = garch_tail_index(&params, 1e-12)?.alpha_hat;
                (
                    ZModel::Garch {
                        params,
                        burn_in: burn_in.unwrap_or(DEFAULT_BURN_IN),
                        alpha_hat,
                    },
                    *exponent,
                )
            }
        };
        let kind = m.y.clone().unwrap_or(YKind::Constant { s: 1.0 });
        let y = match (kind, m.gamma) {
            (YKind::Constant { s }, None) => VolModelY::constant(s),
            (kind, Some(g)) => VolModelY::new(kind, g)?,
            (kind, None) => VolModelY::with_default_gamma(kind, z.index())?,
        };
        Ok(ResolvedModel { z, y, exponent })
    }

    pub fn shape(&self) -> Result<ShapeC, CliError> {
        let g = self.geometry_section()?;
        Ok(match &g.shape {
            ShapeConfig::UnitBox { dim } => ShapeC::unit_box(*dim)?,
            ShapeConfig::Disc { center, radius } => ShapeC::disc(*center, *radius)?,
            ShapeConfig::BoxUnion { dim, boxes } => {
                ShapeC::box_union(*dim, boxes.iter().map(|b| (b.lo.clone(), b.hi.clone())).collect())?
            }
        })
    }

    pub fn geometry_section(&self) -> Result<&GeometryConfig, CliError> {
        self.geometry
            .as_ref()
            .ok_or_else(|| CliError::Validation("missing [geometry] section".into()))
    }

    pub fn geometry(&self) -> Result<IndexSetGeometry, CliError> {
        let g = self.geometry_section()?;
        Ok(IndexSetGeometry::build(
            self.shape()?,
            g.c_n.clone(),
            g.t_n.clone(),
            g.x_n.clone(),
        )?)
    }

    pub fn regions(&self) -> Result<Vec<Region>, CliError> {
        if self.plan.regions.is_empty() {
            return Ok(vec![Region::Scaled(self.shape()?)]);
        }
        self.plan
            .regions
            .iter()
            .map(|b| Ok(Region::Scaled(ShapeC::axis_box(b.lo.clone(), b.hi.clone())?)))
            .collect()
    }

    pub fn level(&self, z: &ZModel) -> LevelRule {
        self.plan.level.unwrap_or(match z {
            ZModel::MovingAverage { .. } => LevelRule::Theoretical,
            ZModel::Garch { .. } => LevelRule::Empirical,
        })
    }
}
