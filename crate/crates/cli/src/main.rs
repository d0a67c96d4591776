//! `growup` experiment driver.
//!
//! Exit status: 0 when every check passes, 1 when a scientific check fails,
//! 2 on numerical or configuration errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{run_command, Session, COMMANDS};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "growup", version, about = "Critical-mass Keller-Segel grow-up experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML file with one section per command; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate f, g, h and check their large-y behaviour.
    Tabulate,
    /// Integrate the matching ODE for a(t).
    Match,
    /// Certify residual signs and boundary matching of both barriers.
    Certify,
    /// Run the PDE and write snapshots.
    Solve,
    /// Slope at the origin and L1 deficit of the critical run.
    Rate,
    /// Profile error of the critical run.
    Profile,
    /// Time shifts ordering the barriers around the critical run.
    Sandwich,
    /// Every command above, each in its own subdirectory.
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Tabulate => "tabulate",
            Command::Match => "match",
            Command::Certify => "certify",
            Command::Solve => "solve",
            Command::Rate => "rate",
            Command::Profile => "profile",
            Command::Sandwich => "sandwich",
            Command::All => "all",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match ExperimentConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let mut session = Session::new(cfg, cli.quiet);
    let runs: Vec<(&str, PathBuf)> = match cli.command {
        Command::All => COMMANDS.iter().map(|c| (*c, cli.out.join(c))).collect(),
        c => vec![(c.name(), cli.out.clone())],
    };
    let mut failed = false;
    for (name, dir) in runs {
        match run_command(&mut session, name, &dir) {
            Ok(v) => failed |= !v.passed(),
            Err(e) => {
                eprintln!("error in {name}: {e:#}");
                return ExitCode::from(2);
            }
        }
    }
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
