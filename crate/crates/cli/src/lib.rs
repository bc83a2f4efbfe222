//! Configuration, orchestration and reporting for `svfield` experiments.

pub mod config;
pub mod experiments;
pub mod record;

use std::path::PathBuf;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::execute;
pub use record::{report_merge, Check, ResultRecord, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("statistical checks failed: {0}")]
    ChecksFailed(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::ChecksFailed(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<svfield::Error> for CliError {
    fn from(e: svfield::Error) -> Self {
        use svfield::Error as E;
        match e {
            E::InvalidParameter { .. }
            | E::DimensionMismatch { .. }
            | E::WindowMismatch(_)
            | E::EmptyDomain
            | E::RegionOutsideDomain(_)
            | E::KappaConditionUnmet { .. }
            | E::MissingEta(_)
            | E::SampleTooSmall { .. } => CliError::Validation(e.to_string()),
            E::Domain(_) | E::DegenerateSpectral | E::NoExceedances => CliError::Other(e.to_string()),
        }
    }
}

/// Command-line overrides applied on top of a configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(r) = self.reps {
            config.plan.replications = r;
        }
        if let Some(t) = self.threads {
            config.threads = t;
        }
        if let Some(o) = &self.out {
            config.output.dir = o.clone();
        }
    }
}

/// Runs an experiment and writes its record and CSV tables to the output
/// directory. Under `strict`, failed checks become [`CliError::ChecksFailed`].
pub fn run_and_write(experiment: Experiment, config: &ExperimentConfig, strict: bool) -> Result<ResultRecord, CliError> {
    let (record, extra) = execute(experiment, config)?;
    let dir = &config.output.dir;
    record.write(dir)?;
    if config.output.csv {
        record.table.write_csv(&dir.join(format!("{}_{}.csv", record.experiment, record.table.name)))?;
        for t in &extra {
            t.write_csv(&dir.join(format!("{}_{}.csv", record.experiment, t.name)))?;
        }
    }
    if strict && !record.passed() {
        let failed: Vec<String> = record
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        return Err(CliError::ChecksFailed(failed.join("; ")));
    }
    Ok(record)
}
