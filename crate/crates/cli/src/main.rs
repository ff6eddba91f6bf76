use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use equilibrium_cli::{cmd_simulate, cmd_solve, cmd_sweep, cmd_verify, ExperimentConfig};

/// Solve, verify and simulate the broker / informed-trader equilibrium.
///
/// The number of worker threads is taken from RAYON_NUM_THREADS.
#[derive(Parser)]
#[command(name = "equilibrium", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `outputs`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths (overrides `n_paths`).
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Number of time steps (overrides `n_steps`).
    #[arg(long, global = true)]
    steps: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the Riccati and offset equations.
    Solve,
    /// Simulate equilibrium paths.
    Simulate,
    /// Run the verification checks.
    Verify,
    /// Simulate once per value of the configured sweep.
    Sweep,
}

fn run(cli: &Cli) -> Result<i32, equilibrium_cli::CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.run.outputs = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(n) = cli.paths {
        cfg.run.n_paths = n;
    }
    if let Some(n) = cli.steps {
        cfg.run.n_steps = n;
    }
    // Re-check the settings after the overrides.
    let cfg = ExperimentConfig::from_value(cfg.to_value())?;
    let outcome = match cli.command {
        Command::Solve => cmd_solve(&cfg)?,
        Command::Simulate => cmd_simulate(&cfg)?,
        Command::Verify => cmd_verify(&cfg)?,
        Command::Sweep => cmd_sweep(&cfg)?,
    };
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
