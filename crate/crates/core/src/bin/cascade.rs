use std::path::PathBuf;
use std::process::ExitCode;

use cascade_core::commands;
use cascade_core::config::ExperimentConfig;
use cascade_core::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cascade",
    version,
    about = "Observational learning with costly search and posted prices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo runs per configuration.
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Cascade boundaries over the configured grid.
    Bounds,
    /// Belief paths and absorption statistics for the configured regimes.
    Simulate,
    /// Expected profits at the configured prices.
    Profits,
    /// Mixed-strategy price distribution on a grid.
    SolveMix,
    /// Stationary statistics under Calvo price resets.
    Calvo,
    /// Continuation welfare, Pigouvian subsidy and welfare-gap decomposition.
    Welfare,
    /// Absorption and profit statistics over a parameter sweep.
    Sweep,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) => 2,
        Error::DegenerateThreshold { .. } => 3,
        Error::NonConvergence { .. } => 4,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(r) = cli.runs {
        cfg.runs = r;
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out = cfg.out.clone();
    match cli.command {
        Command::Bounds => commands::cmd_bounds(&cfg, &out),
        Command::Simulate => commands::cmd_simulate(&cfg, &out),
        Command::Profits => commands::cmd_profits(&cfg, &out),
        Command::SolveMix => commands::cmd_solve(&cfg, &out),
        Command::Calvo => commands::cmd_calvo(&cfg, &out),
        Command::Welfare => commands::cmd_welfare(&cfg, &out),
        Command::Sweep => commands::cmd_sweep(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
