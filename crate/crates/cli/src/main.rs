mod commands;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

/// Strapdown-seeker intercept simulator with learned scale-factor
/// compensation.
#[derive(Debug, Parser)]
#[command(name = "sfcomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo without compensation.
    Baseline(RunArgs),
    /// Train the estimator online; writes a checkpoint and the training curve.
    Train(TrainArgs),
    /// Monte Carlo with the trained estimator compensating the seeker.
    Eval(RunArgs),
    /// Quick numerical self-checks.
    Selftest,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML run configuration; unspecified keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Starting point before the config file: desk or paper.
    #[arg(long)]
    pub preset: Option<String>,
    /// Scale-factor case(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub case: Vec<u8>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel episode workers; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Write per-step trajectory CSVs for this many episodes.
    #[arg(long)]
    pub dump_trajectories: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Continue from the optimizer state stored in `--checkpoint`.
    #[arg(long)]
    pub resume: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Baseline(a) => commands::baseline(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Selftest => selftest::run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Validation(_) => 1,
                CliError::Runtime(_) => 2,
            })
        }
    }
}
