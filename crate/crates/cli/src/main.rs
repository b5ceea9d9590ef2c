//! `orderpick` command-line tool.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orderpick::config::{ExperimentConfig, PolicyChoice};
use orderpick::marl::Algorithm;

/// Environment variable that overrides the configured output root.
pub const OUTPUT_ENV: &str = "ORDERPICK_OUTPUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<orderpick::Error> for CliError {
    fn from(e: orderpick::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "orderpick", version, about = "Warehouse order-picking simulator, heuristics and learners")]
pub struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base preset (paper or tiny); a `preset` key in the config file wins.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Output root; overrides the config and the ORDERPICK_OUTPUT variable.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run episodes with a heuristic, random or trained policy.
    Simulate(RunArgs),
    /// Train HSNAC or SNAC.
    Train(TrainArgs),
    /// Evaluate a policy (defaults to greedy for trained policies).
    Eval(RunArgs),
    /// Measure environment steps per second under a random policy.
    Bench(BenchArgs),
    /// Write the warehouse layout as JSON (and optionally the path table).
    ExportLayout(ExportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub policy: Option<String>,
    /// Checkpoint or policy file for hsnac/snac.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Also write a JSON-lines event log.
    #[arg(long)]
    pub events: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub n_envs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub sectors: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    /// Continue from this checkpoint; its config hash must match.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub n_envs: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Also dump the all-pairs path table.
    #[arg(long)]
    pub paths: bool,
}

fn parse<T: std::str::FromStr<Err = orderpick::Error>>(s: &str) -> Result<T, CliError> {
    s.parse().map_err(CliError::from)
}

/// Builds the effective config: preset, then file, then environment, then flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let fallback = cli.preset.as_deref().unwrap_or("paper");
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml_layered(&text, fallback)?
        }
        None => ExperimentConfig::preset(fallback)?,
    };
    if let Some(dir) = std::env::var_os(OUTPUT_ENV) {
        cfg.output_dir = dir.into();
    }
    if let Some(dir) = &cli.output {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
        cfg.bench.seed = seed;
    }
    match &cli.command {
        Command::Simulate(a) | Command::Eval(a) => {
            if let Some(p) = &a.policy {
                cfg.policy = parse::<PolicyChoice>(p)?;
            }
            if let Some(c) = &a.checkpoint {
                cfg.checkpoint = Some(c.clone());
            }
            if let Some(n) = a.episodes {
                cfg.episodes = n;
            }
            if a.events {
                cfg.engine.record_events = true;
            }
        }
        Command::Train(a) => {
            if let Some(x) = &a.algorithm {
                cfg.train.algorithm = parse::<Algorithm>(x)?;
            }
            if let Some(n) = a.episodes {
                cfg.train.episodes = n;
            }
            if let Some(n) = a.n_envs {
                cfg.train.n_envs = n;
            }
            if let Some(x) = a.lr {
                cfg.train.lr = x;
            }
            if let Some(k) = a.sectors {
                cfg.train.sectors = k;
            }
            if let Some(n) = a.eval_interval {
                cfg.train.eval_interval = n;
            }
            if let Some(n) = a.checkpoint_interval {
                cfg.train.checkpoint_interval = n;
            }
        }
        Command::Bench(a) => {
            if let Some(n) = a.n_envs {
                cfg.bench.n_envs = n;
            }
            if let Some(n) = a.samples {
                cfg.bench.samples = n;
            }
            if let Some(n) = a.warmup {
                cfg.bench.warmup = n;
            }
        }
        Command::ExportLayout(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&cfg, a, "simulate"),
        Command::Eval(a) => commands::simulate(&cfg, a, "eval"),
        Command::Train(a) => commands::train(&cfg, a),
        Command::Bench(_) => commands::bench(&cfg),
        Command::ExportLayout(a) => commands::export_layout(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("orderpick: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("orderpick: {e}");
            ExitCode::from(3)
        }
    }
}
