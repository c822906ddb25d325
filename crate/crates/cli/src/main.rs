//! `rgorbit`: solve heteroclinic RG trajectories, linearize at fixed points,
//! run the hierarchical recursion and sweep parameters. Every file written
//! starts with a provenance record; failures print one JSON object on stderr.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Point;
use crate::config::{Format, Overrides, RunConfig};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "rgorbit", version, about = "Heteroclinic RG trajectories, spectra and hierarchical flows")]
struct Cli {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// ε for both the truncated map and the hierarchical backend; `sweep`
    /// accepts a comma-separated grid.
    #[arg(long, global = true, value_name = "R", value_delimiter = ',', allow_negative_numbers = true)]
    epsilon: Vec<f64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Reject ω₀ outside (0, 1/2).
    #[arg(long, global = true, overrides_with = "no_strict")]
    strict: bool,
    #[arg(long = "no-strict", global = true, overrides_with = "strict")]
    no_strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the complete trajectory anchored at g₀ = ω₀ ḡ_* on [−N, N].
    Orbit {
        #[arg(long, default_value_t = 0.25, value_name = "R", allow_negative_numbers = true)]
        omega0: f64,
        #[arg(long, default_value_t = 100, value_name = "N")]
        window: i64,
    },
    /// Linearize at a fixed point and report eigenvalues and exponents.
    Spectrum {
        #[arg(value_enum, default_value = "ir")]
        point: Point,
    },
    /// Hierarchical effective-potential recursion.
    Hier {
        #[command(subcommand)]
        command: HierCommand,
    },
    /// Solve over a grid of ω₀ (and ε) values.
    Sweep {
        #[arg(
            long,
            value_name = "R,...",
            value_delimiter = ',',
            allow_negative_numbers = true,
            default_value = "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45"
        )]
        omega0: Vec<f64>,
        #[arg(long, default_value_t = 100, value_name = "N")]
        window: i64,
    },
}

#[derive(Subcommand, Debug)]
enum HierCommand {
    /// Iterate from V₀ = μ₀ He₂ + g₀ He₄.
    Flow {
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        g0: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        mu0: f64,
        #[arg(long, default_value_t = 30)]
        steps: usize,
    },
    /// Bisect the critical initial mass for a given g₀.
    Critical {
        #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
        g0: f64,
        #[arg(long, default_value_t = 40)]
        max_steps: usize,
        /// Initial masses `lo,hi` whose flows escape to opposite regimes.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-0.05,0.05")]
        bracket: Vec<f64>,
    },
    /// Newton-solve the nontrivial fixed potential and linearize there.
    FixedPoint,
}

fn single_epsilon(eps: &[f64]) -> Result<Option<f64>, CliError> {
    match eps {
        [] => Ok(None),
        [e] => Ok(Some(*e)),
        _ => Err(CliError::Usage("--epsilon takes a single value outside `sweep`".into())),
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let sweep_eps = matches!(cli.command, Command::Sweep { .. });
    let overrides = Overrides {
        epsilon: if sweep_eps { None } else { single_epsilon(&cli.epsilon)? },
        out: cli.out,
        format: cli.format,
        strict: match (cli.strict, cli.no_strict) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        },
    };
    cfg.apply(&overrides);
    cfg.validate()?;
    match cli.command {
        Command::Orbit { omega0, window } => commands::orbit(&cfg, omega0, window),
        Command::Spectrum { point } => commands::spectrum(&cfg, point),
        Command::Hier { command } => match command {
            HierCommand::Flow { g0, mu0, steps } => commands::hier_flow(&cfg, g0, mu0, steps),
            HierCommand::Critical { g0, max_steps, bracket } => match bracket[..] {
                [lo, hi] => commands::hier_critical(&cfg, g0, max_steps, (lo, hi)),
                _ => Err(CliError::Usage("--bracket takes exactly two values lo,hi".into())),
            },
            HierCommand::FixedPoint => commands::hier_fixed(&cfg),
        },
        Command::Sweep { omega0, window } => {
            let eps = if cli.epsilon.is_empty() { vec![cfg.model.epsilon] } else { cli.epsilon };
            commands::sweep(&cfg, omega0, eps, window)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim_end().to_owned());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
