use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use dynbc_core::config::parse_config;
use dynbc_core::{dispatch, BackwardMode, Mode, RunConfig};

#[derive(Parser)]
#[command(
    name = "dynbc",
    version,
    about = "Solvers for parabolic problems with dynamic boundary conditions"
)]
struct Cli {
    /// TOML run configuration; built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random draw, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-step the forward problem and write the trajectory.
    SolveForward,
    /// Solve the backward (adjoint) problem from the final state.
    SolveAdjoint {
        #[arg(long, value_enum)]
        mode: Option<AdjointMode>,
    },
    /// Galerkin runs on nested eigenbases with energy certificates.
    Spectral,
    /// Run the invariant checks and report PASS/FAIL per check.
    Verify,
    /// Spatial and temporal convergence studies.
    Converge,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdjointMode {
    Weak,
    Transpose,
}

fn load(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    cfg.mode = match &cli.command {
        Command::SolveForward => Mode::Forward,
        Command::SolveAdjoint { mode } => {
            match mode {
                Some(AdjointMode::Weak) => cfg.backward_mode = BackwardMode::Weak,
                Some(AdjointMode::Transpose) => cfg.backward_mode = BackwardMode::ExactTranspose,
                None => {}
            }
            Mode::Adjoint
        }
        Command::Spectral => Mode::Spectral,
        Command::Verify => Mode::Verify,
        Command::Converge => Mode::Converge,
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| dispatch(&cfg).context("run failed"));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
