use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use entropic_agents::cli::{exit_code, run, Command, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "entropic-agents",
    version,
    about = "Entropy-regularized agent dynamics experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the particle system and audit its invariants.
    Simulate(Common),
    /// Fit the convergence rate of the fast-reaction limit.
    Fastlimit(Common),
    /// Compare N- and 2N-particle systems on nested initial data.
    Meanfield(Common),
    /// Probe the structural assumptions and report the resolved constants.
    Check(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Fastlimit(a) => (Command::FastLimit, a),
        Cmd::Meanfield(a) => (Command::MeanField, a),
        Cmd::Check(a) => (Command::Check, a),
    };
    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let mut config = match ScenarioConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    match run(command, &config, &args.out) {
        Ok(outcome) => {
            println!("{}", outcome.summary.trim_end());
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
