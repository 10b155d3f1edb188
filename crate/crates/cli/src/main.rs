mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    BifurcateArgs, EntropyArgs, LandscapeArgs, LyapunovArgs, SimulateArgs, SmoothnessArgs, TrainArgs,
};
use config::{overlay, CliResult, Context, FileSpec};

#[derive(Debug, Parser)]
#[command(name = "rnnlab", version, about = "Dynamical-systems analysis of recurrent networks")]
struct Cli {
    /// TOML run specification; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a cell and write the trajectory.
    Simulate(SimulateArgs),
    /// Bifurcation diagram over a parameter scale or training snapshots.
    Bifurcate(BifurcateArgs),
    /// Cost landscape along parameter directions.
    Landscape(LandscapeArgs),
    /// Train a cell on the sine or symbol task.
    Train(TrainArgs),
    /// Smoothness bounds of the cost and empirical estimates.
    Smoothness(SmoothnessArgs),
    /// Entropy propagation through a linear-Gaussian map.
    Entropy(EntropyArgs),
    /// Lyapunov exponents of a cell under constant input.
    Lyapunov(LyapunovArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileSpec::load(p)?,
        None => FileSpec::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let out = cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(config::config_err("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config::config_err(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(mut a) => {
            a.absorb_flags();
            let a = overlay(file.simulate.as_ref(), &a)?;
            commands::run_simulate(&Context::new("simulate", seed, out, &a), &a)
        }
        Command::Bifurcate(mut a) => {
            a.absorb_flags();
            let a = overlay(file.bifurcate.as_ref(), &a)?;
            commands::run_bifurcate(&Context::new("bifurcate", seed, out, &a), &a)
        }
        Command::Landscape(mut a) => {
            a.absorb_flags();
            let a = overlay(file.landscape.as_ref(), &a)?;
            commands::run_landscape(&Context::new("landscape", seed, out, &a), &a)
        }
        Command::Lyapunov(mut a) => {
            a.absorb_flags();
            let a = overlay(file.lyapunov.as_ref(), &a)?;
            commands::run_lyapunov(&Context::new("lyapunov", seed, out, &a), &a)
        }
        Command::Train(a) => {
            let a = overlay(file.train.as_ref(), &a)?;
            commands::run_train(&Context::new("train", seed, out, &a), &a)
        }
        Command::Smoothness(a) => {
            let a = overlay(file.smoothness.as_ref(), &a)?;
            commands::run_smoothness(&Context::new("smoothness", seed, out, &a), &a)
        }
        Command::Entropy(a) => {
            let a = overlay(file.entropy.as_ref(), &a)?;
            commands::run_entropy(&Context::new("entropy", seed, out, &a), &a)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rnnlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
