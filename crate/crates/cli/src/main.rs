use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svfield_cli::{report_merge, run_and_write, CliError, Experiment, ExperimentConfig, Overrides, ResultRecord};

#[derive(Parser)]
#[command(name = "svfield", version, about = "Extremes of stochastic volatility random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Simulate(RunArgs),
    EtaTheory(RunArgs),
    EtaEstimate(RunArgs),
    Spectral(RunArgs),
    Clusters(RunArgs),
    LimitTest(RunArgs),
    GarchIndex(RunArgs),
    GeometryCheck(RunArgs),
    /// Combine the main tables of several result records.
    ReportMerge(MergeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Limited to the signed 64-bit range so the seed fits in a config file.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 3 when a statistical check fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct MergeArgs {
    records: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn run_experiment(experiment: Experiment, args: RunArgs) -> Result<(), CliError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    Overrides {
        seed: args.seed,
        reps: args.reps,
        threads: args.threads,
        out: args.out,
    }
    .apply(&mut config);
    let record = run_and_write(experiment, &config, args.strict)?;
    for c in &record.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!(
        "wrote {} ({:.2}s)",
        config.output.dir.join(format!("{}.json", record.experiment)).display(),
        record.wall_clock_seconds
    );
    Ok(())
}

fn merge(args: MergeArgs) -> Result<(), CliError> {
    let records = args
        .records
        .iter()
        .map(|p| ResultRecord::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let table = report_merge(&records)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Other(e.to_string()))?;
    let path = args.out.join(format!("{}.csv", table.name));
    table.write_csv(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => run_experiment(Experiment::Simulate, a),
        Command::EtaTheory(a) => run_experiment(Experiment::EtaTheory, a),
        Command::EtaEstimate(a) => run_experiment(Experiment::EtaEstimate, a),
        Command::Spectral(a) => run_experiment(Experiment::Spectral, a),
        Command::Clusters(a) => run_experiment(Experiment::Clusters, a),
        Command::LimitTest(a) => run_experiment(Experiment::LimitTest, a),
        Command::GarchIndex(a) => run_experiment(Experiment::GarchIndex, a),
        Command::GeometryCheck(a) => run_experiment(Experiment::GeometryCheck, a),
        Command::ReportMerge(a) => merge(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
