use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spikelab::cli::{run, Command, RunOptions, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "spikelab", version, about = "Outlier prediction and verification for spiked random matrix models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print predicted outliers as JSON.
    Predict(Common),
    /// Write eigenvalue and histogram CSVs for every size and trial.
    Simulate(Common),
    /// Check predictions against simulations at the largest size.
    Verify(Common),
    /// Verify at every size and write a summary table.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("SPIKELAB_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // only fails if a pool already exists
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: SPIKELAB_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        }
    }
    let (cmd, c) = match cli.command {
        Cmd::Predict(c) => (Command::Predict, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
    };
    let opts = RunOptions { out: c.out, seed: c.seed, trials: c.trials, quiet: c.quiet };
    let code = run(cmd, &c.config, &opts, &mut std::io::stdout().lock());
    ExitCode::from(code as u8)
}
