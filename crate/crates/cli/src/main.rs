//! Command-line driver for the drying simulation and reduction pipeline.
//!
//! Commands: simulate, reduce, validate, gramian, ocp, order-study.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 infeasible heating problem.

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chipdry::presets::{self, Case};

use crate::config::{FileConfig, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "chipdry",
    about = "Wood-chip drying: full-order simulation, reduction, controllability, heating plans",
    version
)]
struct Cli {
    /// TOML file overriding individual preset keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Artifact directory.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Provenance seed recorded in every manifest.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Drying scenario: A (hot air) or B (mild air).
    #[arg(long, global = true, value_enum)]
    case: Option<CaseArg>,

    /// Base parameter set.
    #[arg(long, global = true, value_enum, default_value_t = PresetArg::Paper)]
    preset: PresetArg,

    /// Validate and echo the resolved configuration, then exit.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    A,
    B,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full model and record snapshots.
    Simulate,
    /// Build the reduced basis from recorded snapshots.
    Reduce,
    /// Compare reduced and full trajectories.
    Validate,
    /// Probe controllability with impulse responses.
    Gramian,
    /// Plan the energy-optimal heating schedule.
    Ocp,
    /// Sweep the heating problem across reduced orders.
    OrderStudy,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let preset = match cli.preset {
        PresetArg::Paper => presets::paper(),
        PresetArg::Desk => presets::desk(),
    };
    let mut config = RunConfig::from_preset(&preset);
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
        config.apply_file(file);
    }
    if let Some(case) = cli.case {
        config.apply_case(match case {
            CaseArg::A => Case::A,
            CaseArg::B => Case::B,
        });
    }
    config.seed = cli.seed;
    // Reject invalid values before any command runs, so every exit-2 error
    // happens without touching the artifact directory.
    config
        .material_params()
        .validate()
        .map_err(|e| CliError::config(format!("invalid [material]: {e}")))?;
    chipdry::grid::Grid::new(
        config.grid.nx,
        config.grid.ny,
        config.grid.nz,
        config.grid.h,
    )
    .map_err(|e| CliError::config(format!("invalid [grid]: {e}")))?;
    if let Some(dt) = config.fom.dt {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CliError::config(format!(
                "invalid [fom]: dt must be a positive number, got {dt}"
            )));
        }
    }
    if !(config.fom.horizon > 0.0) || config.fom.snapshots == 0 {
        return Err(CliError::config(
            "invalid [fom]: horizon must be positive and snapshots nonzero".to_string(),
        ));
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = resolve(cli)?;
    if cli.dry_run {
        print!("{}", config.canonical_toml());
        return Ok(());
    }
    match cli.command {
        Command::Simulate => commands::simulate(&config, &cli.out),
        Command::Reduce => commands::reduce(&config, &cli.out),
        Command::Validate => commands::validate(&config, &cli.out),
        Command::Gramian => commands::gramian(&config, &cli.out),
        Command::Ocp => commands::ocp(&config, &cli.out),
        Command::OrderStudy => commands::order_study(&config, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
