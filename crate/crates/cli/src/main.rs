use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ineural_sindy_cli::commands::{cmd_discover, cmd_generate, cmd_report, cmd_sweep};
use ineural_sindy_cli::config::{Experiment, ExperimentConfig, SweepMode};
use ineural_sindy_cli::CliError;

#[derive(Parser)]
#[command(name = "ineural-sindy", version, about = "Sparse equation discovery from noisy trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the benchmark and write noisy datasets.
    Generate(Common),
    /// Run discovery methods and write equations, coefficients and traces.
    Discover {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods, e.g. ineural,stls.
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
    },
    /// Run a noise sweep grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<SweepMode>,
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Collect result files into report.md and report.csv.
    Report {
        /// Directory searched recursively for result JSON files.
        dir: PathBuf,
    },
}

fn experiment(common: &Common, methods: &[String], mode: Option<SweepMode>) -> Result<Experiment, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.experiment.out_dir = Some(out.clone());
    }
    if let Some(seed) = common.seed {
        cfg.experiment.seed = Some(seed);
    }
    if !methods.is_empty() {
        cfg.experiment.methods = Some(methods.to_vec());
    }
    if mode.is_some() {
        cfg.sweep.mode = mode;
    }
    cfg.resolve()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Generate(common) => cmd_generate(&experiment(&common, &[], None)?, &mut out).map(drop),
        Command::Discover { common, method } => {
            cmd_discover(&experiment(&common, &method, None)?, &mut out).map(drop)
        }
        Command::Sweep { common, mode, method, jobs } => {
            cmd_sweep(&experiment(&common, &method, mode)?, jobs, &mut out).map(drop)
        }
        Command::Report { dir } => cmd_report(&dir, &mut out).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
