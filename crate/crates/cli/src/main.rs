//! `surrosens`: sensitivity analysis for surrogate-index estimates of
//! long-term treatment effects.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::{Command, Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{publish, Manifest};

#[derive(Debug, Parser)]
#[command(name = "surrosens", version, about)]
struct Args {
    /// Workflow to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dataset CSV (sample,w,y,s1..sk,x1..xm).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed for simulation and cross-fitting.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Split a file with w and y on every row evenly into the two samples.
    #[arg(long)]
    split: bool,
}

fn execute(args: Args) -> CliResult<String> {
    let mut config = RunConfig::load(&args.config)?;
    config.apply(Overrides {
        data: args.data,
        out: args.out,
        seed: args.seed,
        threads: args.threads,
        split: args.split,
    });
    config.validate(args.command)?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let outcome = commands::run(args.command, &config)?;
    let seed = match args.command {
        Command::Simulate => config.simulate.seed,
        _ => config.estimator.seed,
    };
    let resolved = serde_json::to_value(config.substantive()).map_err(|e| CliError::Config(e.to_string()))?;
    let manifest = Manifest::new(args.command.name(), seed, config.digest(), resolved, outcome.inputs, &outcome.artifacts);
    let written = publish(&config.out, &outcome.artifacts, &manifest)?;
    let mut text = outcome.summary;
    for p in written {
        text.push_str(&format!("\nwrote {}", p.display()));
    }
    Ok(text)
}

fn main() -> ExitCode {
    match execute(Args::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
