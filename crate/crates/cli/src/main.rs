//! Command-line front-end: `run` executes a benchmark described by a JSON
//! config file; `attack` runs a single attack without writing a config.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use robustbench::config::{parse_criterion_spec, AttackSpec, BenchmarkConfig, DatasetFormat};
use robustbench::runner::{run_benchmark, RunError};
use robustbench_core::distances::DistanceMeasure;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "robustbench", version, about = "Adversarial robustness benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the benchmark described by a JSON config file.
    Run(RunArgs),
    /// Run a single attack over a dataset without a config file.
    Attack(AttackArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Benchmark description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Where to write the JSON report.
    #[arg(long)]
    output: PathBuf,
    /// Overrides the config's global_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's worker count.
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// Model description file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Dataset file format.
    #[arg(long)]
    format: String,
    /// Dataset path (for idx: the images file or their directory).
    #[arg(long)]
    dataset: PathBuf,
    /// Labels file for idx datasets, when not derivable from the images path.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Attack name from the catalog.
    #[arg(long)]
    attack: String,
    /// Criterion spec: name[:v1[:v2]], e.g. misclassification or top_k:2.
    #[arg(long)]
    criterion: String,
    /// Distance measure: mse, mae, linf, or l0.
    #[arg(long)]
    distance: String,
    /// Global seed of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Limit the number of samples attacked.
    #[arg(long)]
    samples: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Attack(args) => attack(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(args: RunArgs) -> Result<(), RunError> {
    let mut config = BenchmarkConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.global_seed = seed;
    }
    if let Some(parallelism) = args.parallelism {
        config.parallelism = Some(parallelism);
    }
    let base_dir = args
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let report = run_benchmark(&config, &base_dir)?;
    report.emit(&args.output)?;
    println!(
        "evaluated {} sample(s); robustness: {}",
        report.evaluated_samples,
        report
            .robustness
            .map_or_else(|| "undefined (no successes)".to_string(), |r| r.to_string())
    );
    Ok(())
}

fn attack(args: AttackArgs) -> Result<(), RunError> {
    let format: DatasetFormat = args
        .format
        .parse()
        .map_err(RunError::Invalid)?;
    let distance = DistanceMeasure::parse(&args.distance)
        .ok_or_else(|| RunError::Invalid(format!("unknown distance name: {}", args.distance)))?;
    let criterion = parse_criterion_spec(&args.criterion)?;
    let config = BenchmarkConfig {
        model_path: args.model,
        dataset_path: args.dataset,
        dataset_format: format,
        labels_path: args.labels,
        attacks: vec![AttackSpec {
            name: args.attack,
            overrides: serde_json::Map::new(),
        }],
        criterion,
        distance,
        global_seed: args.seed,
        sample_limit: args.samples,
        parallelism: None,
    };
    let report = run_benchmark(&config, Path::new("."))?;
    report.emit(&args.output)?;
    println!(
        "evaluated {} sample(s); robustness: {}",
        report.evaluated_samples,
        report
            .robustness
            .map_or_else(|| "undefined (no successes)".to_string(), |r| r.to_string())
    );
    Ok(())
}
