use std::path::PathBuf;
use std::process::ExitCode;

use advsysid_cli::commands::{cmd_certify, cmd_experiment, cmd_fit, cmd_simulate, Invocation};
use advsysid_cli::THREADS_ENV;
use clap::{Args, Parser, Subcommand};

/// Identify x_{t+1} = A* x_t + w_t under adversarial disturbances.
#[derive(Parser)]
#[command(name = "advsysid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: available cores].
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write it as CSV.
    Simulate(Common),
    /// Fit the configured estimators to a trajectory CSV.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Run the recovery experiment over the configured (p, d) grid.
    Experiment(Common),
    /// Check the exact-recovery condition on a trajectory CSV.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: PathBuf,
        /// Use N random directions instead of a covering net.
        #[arg(long, value_name = "N")]
        sampled: Option<usize>,
    },
}

fn invocation(c: Common) -> Invocation {
    let threads = c.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Invocation { config_path: c.config, out_dir: c.out, seed: c.seed, threads }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(c) => cmd_simulate(&invocation(c)),
        Command::Fit { common, trajectory } => cmd_fit(&invocation(common), &trajectory),
        Command::Experiment(c) => cmd_experiment(&invocation(c)),
        Command::Certify { common, trajectory, sampled } => cmd_certify(&invocation(common), &trajectory, sampled),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
