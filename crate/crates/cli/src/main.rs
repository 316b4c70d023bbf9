use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasedom::error::Error;
use phasedom::experiment::{parse_config_with, run_experiment, Overrides};
use phasedom::stochastic::DominanceOrder;

#[derive(Parser)]
#[command(name = "phasedom", version, about = "Phase-field shape optimisation under stochastic dominance constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Dominance order: first or second.
        #[arg(long)]
        order: Option<DominanceOrder>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// KKT tolerance of the final stage.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_level: Option<u8>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { config, order, out, preset, tol, max_level } = cli.command;
    let overrides = Overrides { preset, order, output: out, tol, max_level };
    let cfg = match parse_config_with(&config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(1);
        }
    };
    match run_experiment(&cfg) {
        Ok(summary) => {
            print!("{}", summary.to_text());
            println!("output = {}", cfg.output.display());
            if summary.success && summary.converged() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(1)
        }
    }
}
