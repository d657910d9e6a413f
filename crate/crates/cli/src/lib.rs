//! Command-line harness around `lowrank_core`: landscape certification,
//! solver runs, sensing phase transitions and landscape grids.
//!
//! Every command reads an optional JSON configuration (see the README for
//! the schema), prints a JSON summary on stdout, and with `--out DIR`
//! writes the effective configuration, a manifest and its result files.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use config::ExperimentConfig;
pub use error::{CliError, CliResult};
use output::RunDir;

#[derive(Debug, Parser)]
#[command(name = "lowrank", version, about = "Factored low-rank landscape certification and solver experiments")]
pub struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override the configuration seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Directory for config copy, manifest and results.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Property suites and finite-difference derivative checks.
    Verify,
    /// Region sampling and landscape certificates.
    Geometry,
    /// Gradient descent / perturbed gradient descent runs.
    Solve,
    /// Sensing recovery rates over measurement counts and conditioning.
    Sweep,
    /// Two-dimensional weighted PCA landscape grid.
    Landscape,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::Geometry => "geometry",
            Self::Solve => "solve",
            Self::Sweep => "sweep",
            Self::Landscape => "landscape",
        }
    }
}

/// Result of a completed command: the JSON summary and whether the
/// experiment met its checks.
#[derive(Debug)]
pub struct Outcome {
    pub report: serde_json::Value,
    pub passed: bool,
}

impl Outcome {
    pub fn from_report<T: Serialize>(report: &T, passed: bool) -> CliResult<Self> {
        Ok(Self { report: serde_json::to_value(report)?, passed })
    }

    pub fn exit_code(&self) -> u8 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

fn execute<C: ExperimentConfig>(cli: &Cli, body: fn(&C, &RunDir) -> CliResult<Outcome>) -> CliResult<Outcome> {
    let cfg: C = config::load(cli.config.as_deref(), cli.seed)?;
    let dir = RunDir::create(cli.out.as_deref(), cli.command.name(), cfg.seed(), &cfg)?;
    let outcome = body(&cfg, &dir)?;
    dir.write_json("summary.json", &outcome.report)?;
    Ok(outcome)
}

/// Run the selected command. The worker pool is configured by the caller.
pub fn run(cli: &Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Verify => execute(cli, commands::verify::run),
        Command::Geometry => execute(cli, commands::geometry::run),
        Command::Solve => execute(cli, commands::solve::run),
        Command::Sweep => execute(cli, commands::sweep::run),
        Command::Landscape => execute(cli, commands::landscape::run),
    }
}
