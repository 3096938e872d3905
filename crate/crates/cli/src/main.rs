//! `sqppp`: fit, evaluate, simulate, grid-export and benchmark squared-network
//! Poisson intensities from a TOML run configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "sqppp", version, about = "Squared neural Poisson point process toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    output: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to events; writes model.json and fit_report.json.
    Fit(Common),
    /// Test metrics of a saved model; writes metrics.json.
    Eval(Common),
    /// Draw one realisation; writes events.csv.
    Simulate(Common),
    /// Intensity on a regular lattice; writes grid.json.
    Grid(Common),
    /// Fit timings over event counts; writes bench.json.
    Bench(Common),
}

fn run(cli: Cli) -> Result<(), String> {
    let (common, f): (&Common, fn(&commands::Ctx) -> commands::CmdResult<()>) = match &cli.command {
        Command::Fit(c) => (c, commands::fit),
        Command::Eval(c) => (c, commands::eval),
        Command::Simulate(c) => (c, commands::simulate),
        Command::Grid(c) => (c, commands::grid),
        Command::Bench(c) => (c, commands::bench),
    };
    if let Some(t) = common.threads {
        if t == 0 {
            return Err("--threads must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| e.to_string())?;
    }
    let loaded = config::load(&common.config)?;
    let seed = common.seed.unwrap_or(loaded.config.seed);
    let ctx = commands::Ctx { loaded, seed, output: common.output.clone() };
    f(&ctx)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
