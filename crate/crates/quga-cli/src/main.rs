//! Command-line surface for the sea-route graph GAN experiments.
//!
//! Subcommands: `gen-data`, `train`, `baseline`, `report`. Experiments are
//! configured by one JSON file plus dotted-path overrides; every output file
//! embeds the configuration hash through a header comment or sidecar.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data
//! error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::Config;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "quga",
    about = "Hybrid quantum-classical GAN experiments on 4-port sea-distance graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config JSON; defaults to the desk-scale preset
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dotted-path config overrides, e.g. train.epochs=200
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the training dataset from the configured port list
    GenData {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the dataset into this directory instead of the configured path
        #[arg(long)]
        dataset_out: Option<PathBuf>,
    },
    /// Train one model (classical | qugan36 | qugan66 | qugan72 | qugan132)
    Train {
        /// Model name; overrides model.name
        #[arg(long)]
        model: Option<String>,
        /// Comma-separated seeds; overrides train.seeds
        #[arg(long, value_delimiter = ',')]
        seed_list: Option<Vec<u64>>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit the KDE baseline and sample graphs edge by edge
    Baseline {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Emit the four figure-data CSVs from completed runs
    Report {
        /// Completed train run directories (out/<model>)
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Directory holding baseline_summary.json and baseline_samples.csv
        #[arg(long)]
        baseline_dir: PathBuf,
        /// Training dataset CSV for the density overlay
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory
        #[arg(long, default_value = "out/report")]
        out: PathBuf,
        /// Histogram bins for the density panel
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
}

/// QUGA_THREADS caps all parallelism (seeds and within-step work share one
/// pool).
fn init_thread_pool() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("QUGA_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| CliError::Usage(format!("QUGA_THREADS={raw:?} is not a thread count")))?;
        if n == 0 {
            return Err(CliError::Usage("QUGA_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_thread_pool()?;
    match cli.command {
        Command::GenData { common, dataset_out } => {
            let (config, hash) = Config::load(common.config.as_deref(), &common.overrides)?;
            commands::cmd_gen_data(&config, &hash, dataset_out.as_deref())
        }
        Command::Train {
            model,
            seed_list,
            common,
        } => {
            let mut overrides = common.overrides.clone();
            if let Some(name) = model {
                overrides.push(format!("model.name={name}"));
            }
            if let Some(seeds) = seed_list {
                let list = seeds
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                overrides.push(format!("train.seeds=[{list}]"));
            }
            let (config, hash) = Config::load(common.config.as_deref(), &overrides)?;
            commands::cmd_train(&config, &hash, &common.out)
        }
        Command::Baseline { common } => {
            let (config, hash) = Config::load(common.config.as_deref(), &common.overrides)?;
            commands::cmd_baseline(&config, &hash, &common.out)
        }
        Command::Report {
            run_dirs,
            baseline_dir,
            dataset,
            out,
            bins,
        } => commands::cmd_report(&run_dirs, &baseline_dir, &dataset, &out, bins),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
