//! `delayspread`: run spread experiments from a JSON parameter file.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 failed assumption
//! check, 4 numerical failure (bracketing, convergence, boundary
//! contamination).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::{Initial, RunSettings};

#[derive(Parser)]
#[command(
    name = "delayspread",
    version,
    about = "Spreading speeds for seasonal stage-structured populations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the model assumptions and write validation.json.
    Validate,
    /// Threshold number, fixed point, and the spatially constant orbit.
    Kinetics,
    /// Minimal spreading speed and the dispersion profile.
    Speed,
    /// Simulate the yearly map and compare the front speed with c*.
    Simulate,
    /// Immature density: periodic solution, conservation, wave profiles.
    Immature,
    /// Compare c* under the actual and the averaged delay.
    PropDelay,
    /// Compare c* under three placements of extra adult mortality.
    PropMortality,
    /// c*(k)/sqrt(k) as the adult diffusion grows by k.
    PropScaling,
}

#[derive(Args)]
struct Common {
    /// JSON parameter file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override a config entry by dotted path, e.g. birth.ricker.P=30 or
    /// run.years=20. Values are parsed as JSON when possible.
    #[arg(long = "set", global = true, value_name = "K=V")]
    overrides: Vec<String>,
    /// Number of grid points (a power of two).
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Half-width L of the periodic domain [-L, L).
    #[arg(long, global = true)]
    grid_halfwidth: Option<f64>,
    /// Gauss-Legendre nodes on the maturation window.
    #[arg(long, global = true)]
    quad_n: Option<usize>,
    /// Simulated years.
    #[arg(long, global = true)]
    years: Option<usize>,
    /// Adult density whose crossing marks the front (default u*/2).
    #[arg(long, global = true)]
    front_level: Option<f64>,
    /// Initial adult profile for simulations.
    #[arg(long, global = true, value_enum)]
    initial: Option<InitialArg>,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum InitialArg {
    CriticalTail,
    Plateau,
}

impl Common {
    fn run_flags(&self) -> RunSettings {
        RunSettings {
            grid_n: self.grid_n,
            grid_halfwidth: self.grid_halfwidth,
            quad_n: self.quad_n,
            years: self.years,
            front_level: self.front_level,
            initial: self.initial.map(|i| match i {
                InitialArg::CriticalTail => Initial::CriticalTail,
                InitialArg::Plateau => Initial::Plateau,
            }),
            ..RunSettings::default()
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let path = cli
        .common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config(anyhow::anyhow!("--config PATH is required")))?;
    let mut cfg = config::load(path, &cli.common.overrides)?;
    cfg.run = commands::merge_run(cfg.run, cli.common.run_flags());
    let out = &cli.common.out;
    match cli.command {
        Command::Validate => commands::validate_cmd(&cfg, out),
        Command::Kinetics => commands::kinetics_cmd(&cfg, out),
        Command::Speed => commands::speed_cmd(&cfg, out),
        Command::Simulate => commands::simulate_cmd(&cfg, out),
        Command::Immature => commands::immature_cmd(&cfg, out),
        Command::PropDelay => commands::prop_delay_cmd(&cfg, out),
        Command::PropMortality => commands::prop_mortality_cmd(&cfg, out),
        Command::PropScaling => commands::prop_scaling_cmd(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
