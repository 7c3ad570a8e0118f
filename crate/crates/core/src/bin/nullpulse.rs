use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use nullpulse::config::{Overrides, RunConfig};
use nullpulse::runner::{self, Subcommand, EXIT_CONFIG, EXIT_FAILURE};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    GenData,
    SolveH0,
    EvolveFormation,
    Norms,
    ScalingStudy,
    Residuals,
    CheckBalance,
    Report,
}

impl From<Cmd> for Subcommand {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::GenData => Subcommand::GenData,
            Cmd::SolveH0 => Subcommand::SolveH0,
            Cmd::EvolveFormation => Subcommand::EvolveFormation,
            Cmd::Norms => Subcommand::Norms,
            Cmd::ScalingStudy => Subcommand::ScalingStudy,
            Cmd::Residuals => Subcommand::Residuals,
            Cmd::CheckBalance => Subcommand::CheckBalance,
            Cmd::Report => Subcommand::Report,
        }
    }
}

/// Double-null Einstein-Maxwell toolkit.
///
/// Exit codes: 0 success, 2 config error, 3 solver non-convergence,
/// 4 invariant violation (including a violated pulse ansatz),
/// 10 trapped / 11 not trapped for evolve-formation.
#[derive(Debug, Parser)]
#[command(name = "nullpulse", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML file overlaid on the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Pulse width.
    #[arg(long)]
    delta: Option<f64>,
    /// Formation mode: model, bound or extended.
    #[arg(long)]
    mode: Option<String>,
    /// Maxwell signature baseline: half or one.
    #[arg(long)]
    baseline: Option<String>,
    /// Criterion constant C0 of the formation window.
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to NULLPULSE_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Slab file for `residuals` (overrides residuals.source).
    #[arg(long)]
    input: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_threads = match std::env::var("NULLPULSE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) => Some(n),
            Err(_) => {
                eprintln!("error: NULLPULSE_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        },
        Err(_) => None,
    };
    let ov = Overrides {
        delta: cli.delta,
        mode: cli.mode.clone(),
        baseline: cli.baseline.clone(),
        c0: cli.c0,
        seed: cli.seed,
        threads: cli.threads.or(env_threads),
    };
    let cfg = match RunConfig::load(cli.config.as_deref(), &ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_FAILURE as u8);
        }
    }
    match runner::run(cli.command.into(), &cfg, &cli.out, cli.input.as_deref()) {
        Ok(o) => {
            println!("{}", o.summary);
            for a in &o.artifacts {
                println!("  wrote {}", cli.out.join(a).display());
            }
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
