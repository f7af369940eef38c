use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use msde_core::models::BUILTIN_DRIFTS;

mod config;
mod run;

use config::RunConfig;

/// Backward Euler–Maruyama experiments for multi-valued SDEs.
#[derive(Parser)]
#[command(name = "msde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for path-level parallelism.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory; overrides `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a config and check its step-size gates without simulating.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List built-in models.
    ListModels,
}

fn seed_override(config_seed: u64) -> Result<(u64, &'static str)> {
    match std::env::var("MSDE_SEED") {
        Ok(s) => Ok((s.trim().parse().with_context(|| format!("MSDE_SEED={s:?} is not a u64"))?, "MSDE_SEED")),
        Err(_) => Ok((config_seed, "config")),
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, threads, out } => {
            let cfg = RunConfig::load(&config)?;
            let (seed, source) = seed_override(cfg.experiment.seed)?;
            let out_dir = out
                .or_else(|| cfg.output.directory.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            let prepared = run::prepare(cfg)?;
            let threads = threads.unwrap_or_else(rayon::current_num_threads).max(1);
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
            let outcome = pool.install(|| run::execute(&prepared, &out_dir, seed, source, threads))?;
            println!("wrote {}", outcome.csv.display());
            println!("wrote {}", outcome.meta.display());
            if !outcome.summary.is_null() {
                println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
            }
        }
        Command::Validate { config } => {
            let prepared = run::prepare(RunConfig::load(&config)?)?;
            println!("{} ok: {:?}", config.display(), prepared.spec);
            for g in &prepared.gates {
                println!("  {} gate at k = {}: product {:.6}, slack {:.6}", g.regime, g.k, g.product, g.slack);
            }
        }
        Command::ListModels => {
            println!("drifts (problem.drift.model):");
            for (name, about) in BUILTIN_DRIFTS {
                println!("  {name:<12} {about}");
            }
            println!("  {:<12} stochastic p-Laplace, P1 elements on (0, L)", "plaplace");
            println!("perturbations (problem.b.kind): zero, linear, sine");
            println!("diffusions (problem.g.kind): constant, diagonal-linear, plaplace");
            println!("initial values (problem.x0.kind): fixed, gaussian, plaplace");
            println!("experiments: rate, eta-rate, diagnostics, gap, wiener-check");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
