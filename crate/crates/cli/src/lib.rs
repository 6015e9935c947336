//! Command-line front end: configuration, pipelines and report files.

pub mod commands;
pub mod config;
pub mod output;
pub mod reproduce;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Parser;

pub use config::{Command, RunConfig};
pub use output::Outputs;

#[derive(Debug, Parser)]
#[command(name = "skyrmap", version, about = "Energies, Euler–Lagrange residuals and second variations of maps between model manifolds")]
pub struct Cli {
    pub command: Command,
    /// TOML run configuration; omitted means all defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed, overriding `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub echo_config: bool,
}

/// Outcome of a successful run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A reproduce case missed its target.
    AssertionFailed,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::AssertionFailed => 2,
        }
    }
}

/// Resolves the effective configuration from the file and command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = cfg.command {
        if c != cli.command {
            bail!("config is for `{}` but the command line says `{}`", name(c), name(cli.command));
        }
    }
    cfg.command = Some(cli.command);
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn name(c: Command) -> String {
    serde_json::to_value(c).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

pub fn run(cfg: &RunConfig) -> Result<Status> {
    let out = Outputs::create(&cfg.output.dir)?;
    let command = cfg.command.unwrap_or(Command::Energy);
    match command {
        Command::Analyze => commands::analyze(cfg, &out)?,
        Command::Energy => commands::energy(cfg, &out)?,
        Command::Critical => commands::critical(cfg, &out)?,
        Command::MinimizeProfile => commands::minimize(cfg, &out)?,
        Command::Stability => commands::stability(cfg, &out)?,
        Command::Reproduce => {
            if !reproduce::reproduce(cfg, &out)? {
                return Ok(Status::AssertionFailed);
            }
        }
    }
    Ok(Status::Ok)
}
