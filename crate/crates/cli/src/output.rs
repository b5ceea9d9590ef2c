use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use orderpick::config::ExperimentConfig;
use orderpick::eval::Aggregate;
use orderpick::marl::CurvePoint;
use orderpick::sim::{Event, MetricsReport};
use serde::Serialize;

use crate::CliError;

pub const EPISODE_COLUMNS: [&str; 7] = [
    "episode",
    "pick_rate_lines_per_hour",
    "agv_distance_m",
    "picker_distance_m",
    "agv_idle_s",
    "picker_idle_s",
    "mean_lead_time_s",
];

/// Creates `<output_dir>/<name>` and returns it.
pub fn run_dir(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir.join(name);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn write_episodes(path: &Path, reports: &[MetricsReport]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EPISODE_COLUMNS)?;
    for (e, r) in reports.iter().enumerate() {
        w.write_record(&[
            e.to_string(),
            r.pick_rate_lines_per_hour.to_string(),
            r.agv_distance_m.to_string(),
            r.picker_distance_m.to_string(),
            r.agv_idle_s.to_string(),
            r.picker_idle_s.to_string(),
            r.mean_lead_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, agg: &Aggregate) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "mean", "ci95_half_width", "ci95_low", "ci95_high", "std", "n"])?;
    for (name, e) in agg.rows() {
        w.write_record(&[
            name.to_string(),
            e.mean.to_string(),
            e.ci95.to_string(),
            e.lower().to_string(),
            e.upper().to_string(),
            e.std.to_string(),
            e.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "pick_rate", "mean_reward", "policy_loss", "value_loss", "entropy"])?;
    for p in curve {
        w.write_record(&[
            p.episode.to_string(),
            p.pick_rate.to_string(),
            p.mean_reward.to_string(),
            p.policy_loss.to_string(),
            p.value_loss.to_string(),
            p.entropy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EventLine<'a> {
    episode: usize,
    #[serde(flatten)]
    event: &'a Event,
}

/// Appends events of one episode as JSON lines.
pub struct EventLog {
    out: BufWriter<File>,
}

impl EventLog {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }

    pub fn write(&mut self, episode: usize, events: &[Event]) -> Result<(), CliError> {
        for event in events {
            serde_json::to_writer(&mut self.out, &EventLine { episode, event })?;
            self.out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub config: String,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, cfg: &ExperimentConfig) -> Result<Self, CliError> {
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            files: Vec::new(),
            config: cfg.to_toml_string()?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut f = File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}
