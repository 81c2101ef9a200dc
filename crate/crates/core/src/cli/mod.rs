//! Command-line front end: argument parsing, experiment config loading and
//! the subcommands.
//!
//! Exit codes: 0 on success, 1 for domain errors (invalid networks or
//! deployments, simulation failures), 2 for I/O, syntax and config errors.
//! Machine-readable output goes to stdout; diagnostics go to stderr.

mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::fuselink::ValidationReport;
use crate::simulator::ArchMode;
pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "a3sim", version, about = "Dual-modality fusion accelerator simulator")]
pub struct Args {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Hypernetwork seed; overrides the config's `hypernet.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub arch_mode: Option<ModeArg>,
    /// Write per-task trace CSVs next to the results.
    #[arg(long, global = true)]
    pub trace: bool,
    /// Built-in network preset; overrides the config's network.
    #[arg(long, global = true, conflicts_with = "network")]
    pub preset: Option<String>,
    /// Dual-network JSON file; overrides the config's network.
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,
    /// Deployment JSON file; overrides the config's deployment path.
    #[arg(long, global = true)]
    pub deployment: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    BaselineSequential,
    FuseMultitasking,
    Both,
}

impl ModeArg {
    pub fn modes(self) -> Vec<ArchMode> {
        match self {
            ModeArg::BaselineSequential => vec![ArchMode::BaselineSequential],
            ModeArg::FuseMultitasking => vec![ArchMode::FuseMultitasking],
            ModeArg::Both => vec![ArchMode::BaselineSequential, ArchMode::FuseMultitasking],
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the network and deployment and print a JSON report.
    Validate,
    /// Enumerate and rank deployments from the config's policy.
    Enumerate,
    /// Simulate one deployment and compare architecture modes.
    Simulate,
    /// Gate the deployment with the hypernetwork over a threshold sweep.
    Sweep,
    /// Tabulate two or more saved simulation results.
    Compare {
        #[arg(required = true, num_args = 2..)]
        results: Vec<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("{message}")]
    Violations {
        message: String,
        report: ValidationReport,
    },
}

impl CliError {
    pub fn domain(msg: impl Into<String>) -> Self {
        CliError::Domain(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Config(_) => 2,
            CliError::Domain(_) | CliError::Violations { .. } => 1,
        }
    }
}

/// Merges command-line overrides into the (optional) config file.
pub fn resolve_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(preset) = &args.preset {
        cfg.network = config::NetworkSource {
            preset: Some(preset.clone()),
            path: None,
        };
    }
    if let Some(path) = &args.network {
        cfg.network = config::NetworkSource {
            preset: None,
            path: Some(path.clone()),
        };
    }
    if let Some(path) = &args.deployment {
        cfg.deployment.get_or_insert_with(Default::default).path = Some(path.clone());
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    if let Some(seed) = args.seed {
        cfg.hypernet.get_or_insert_with(Default::default).seed = seed;
    }
    if cfg.thresholds.is_some() && cfg.hypernet.is_none() {
        return Err(CliError::Config("thresholds require a hypernet section".into()));
    }
    Ok(cfg)
}

/// Runs one invocation, writing JSON results to `stdout`; returns the exit
/// code.
pub fn run(args: &Args, stdout: &mut dyn Write) -> i32 {
    let outcome = resolve_config(args).and_then(|cfg| match &args.command {
        Command::Validate => commands::validate(&cfg, stdout),
        Command::Enumerate => commands::enumerate(&cfg, stdout),
        Command::Simulate => commands::simulate(&cfg, args, stdout),
        Command::Sweep => commands::sweep(&cfg, stdout),
        Command::Compare { results } => commands::compare(results, stdout),
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            if let CliError::Violations { report, .. } = &e {
                let doc = serde_json::json!({ "ok": false, "violations": report.violations });
                let _ = writeln!(stdout, "{doc:#}");
            }
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
