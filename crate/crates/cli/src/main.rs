use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kac_bgk::harness::{execute, load_config, Command, RunConfig, RunMode};
use log::error;

#[derive(Parser)]
#[command(name = "kacbgk", version, about = "Kac particle, splitting and BGK simulations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Particle run: kac-cell, kac-ball or splitting.
    Simulate(Common),
    /// Deterministic BGK solve.
    Solve(Common),
    /// Splitting run against the solver.
    Compare(Common),
    /// Convergence sweep against the solver.
    Sweep(Common),
    /// Microcanonical sampler and ensemble-equivalence report.
    MicrocanonicalTest(Optional),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    rest: Shared,
}

#[derive(Args)]
struct Optional {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    rest: Shared,
}

#[derive(Args)]
struct Shared {
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the configured one, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores, or KACBGK_THREADS).
    #[arg(long, env = "KACBGK_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (command, config, shared) = match cli.command {
        Sub::Simulate(c) => (Command::Simulate, Some(c.config), c.rest),
        Sub::Solve(c) => (Command::Solve, Some(c.config), c.rest),
        Sub::Compare(c) => (Command::Compare, Some(c.config), c.rest),
        Sub::Sweep(c) => (Command::Sweep, Some(c.config), c.rest),
        Sub::MicrocanonicalTest(c) => (Command::MicrocanonicalTest, c.config, c.rest),
    };
    match run(command, config.as_deref(), &shared) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}

fn run(command: Command, config: Option<&Path>, shared: &Shared) -> kac_bgk::Result<()> {
    let mut cfg = match config {
        Some(p) => load_config(p)?,
        None => RunConfig::new(RunMode::MicrocanonicalTest).finalize()?,
    };
    if let Some(s) = shared.seed {
        cfg.seed = s;
    }
    let out = shared
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let pool = match shared.threads {
        Some(0) => return Err(kac_bgk::Error::Config { path: "threads".into(), message: "must be at least 1".into() }),
        Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k),
        None => rayon::ThreadPoolBuilder::new(),
    }
    .build()
    .map_err(|e| kac_bgk::Error::Io(std::io::Error::other(e)))?;
    let outcome = pool.install(|| execute(command, &cfg, &out))?;
    for line in outcome.lines {
        println!("{line}");
    }
    println!("outputs in {}", out.display());
    Ok(())
}
