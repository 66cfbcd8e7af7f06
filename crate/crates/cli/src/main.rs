//! `banditpde` command-line front end.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Run;
use config::{ExperimentConfig, ProblemVariant};
use error::CliError;

#[derive(Parser)]
#[command(name = "banditpde", version, about = "Bayes and minimax risk of diffusion-asymptotic bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured PDE and write value slices, controls and a report.
    Solve(Common),
    /// Compare a policy's Bayes risk with the optimum over a ν × σ sweep.
    EvalPolicy(Common),
    /// Monte-Carlo Bayes risk across horizons.
    Simulate(Common),
    /// Least-favorable prior search and minimax value.
    Minimax(Common),
    /// Optimal batched policy.
    Batched(Common),
    /// Best-arm identification.
    BestArm(Common),
    /// Stationary discounted problem.
    Discounted(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common, kind) = match cli.command {
        Command::Solve(c) => ("solve", c, None),
        Command::EvalPolicy(c) => ("eval-policy", c, None),
        Command::Simulate(c) => ("simulate", c, None),
        Command::Minimax(c) => ("minimax", c, None),
        Command::Batched(c) => ("batched", c, Some(ProblemVariant::Batched)),
        Command::BestArm(c) => ("best-arm", c, Some(ProblemVariant::BestArm)),
        Command::Discounted(c) => ("discounted", c, Some(ProblemVariant::Discounted)),
    };
    let (mut cfg, _) = ExperimentConfig::load(common.config.as_deref())?;
    cfg.apply_env()?;
    if let Some(k) = kind {
        cfg.problem.kind = k;
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let r = Run::new(cfg, name);
    match name {
        "solve" | "batched" | "best-arm" | "discounted" => commands::solve(&r),
        "eval-policy" => commands::eval_policy(&r),
        "simulate" => commands::simulate(&r),
        "minimax" => commands::minimax(&r),
        _ => unreachable!("every subcommand is dispatched"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("banditpde: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
