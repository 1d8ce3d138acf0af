use std::path::PathBuf;
use std::process::ExitCode;

use acnavier_core::io::{execute, load_config, Command};
use clap::{Parser, Subcommand};

/// Stochastic Navier-Stokes with artificial compressibility: simulation and checks.
#[derive(Debug, Parser)]
#[command(name = "acnavier", version)]
struct Cli {
    /// Configuration file (TOML sections [solver] [noise] [force] [initial] [mc] [sweep] [verify]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one setting, `section.key=value`; bare keys refer to [solver].
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte Carlo paths (per eps value for sweep-eps).
    #[arg(long, global = true)]
    paths: Option<usize>,

    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Simulate one path and write its record, energy ledger and final snapshot.
    Run,
    /// Randomized search for violations of the operator inequalities.
    Verify {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Monte Carlo check of the weighted energy bound.
    McEnergy,
    /// Monte Carlo moment bound and its implied constant.
    McMoment,
    /// Weighted difference of two paths driven by the same noise.
    Uniqueness,
    /// Compare runs at decreasing eps with the incompressible reference.
    SweepEps,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "error"
    } else {
        "info"
    }))
    .init();

    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("solver.seed={seed}"));
    }
    let command = match cli.command {
        Cmd::Run => Command::Run,
        Cmd::Verify { samples } => {
            if let Some(n) = samples {
                overrides.push(format!("verify.samples={n}"));
            }
            Command::Verify
        }
        Cmd::McEnergy => Command::McEnergy,
        Cmd::McMoment => Command::McMoment,
        Cmd::Uniqueness => Command::Uniqueness,
        Cmd::SweepEps => Command::SweepEps,
    };
    if let Some(m) = cli.paths {
        let section = if command == Command::SweepEps { "sweep" } else { "mc" };
        overrides.push(format!("{section}.paths={m}"));
    }

    let cfg = match load_config(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    log::info!("{}: writing to {}", command.name(), cli.out.display());
    match execute(command, &cfg, &cli.out) {
        Ok(outcome) => {
            if !cli.quiet {
                for line in &outcome.lines {
                    println!("{line}");
                }
            }
            ExitCode::from(if outcome.pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
