//! Experiment configuration, presets and config hashing.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::marl::TrainConfig;
use crate::sim::{EngineConfig, Env};
use crate::warehouse::{generate_layout, OrderProfile, Warehouse, WarehouseGraph, WorkerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub aisles: usize,
    pub slots_per_aisle: usize,
    pub stations: usize,
    /// Multiplier applied to real distances.
    pub scale: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self { aisles: 22, slots_per_aisle: 58, stations: 4, scale: 1.0 / 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkersConfig {
    pub agvs: usize,
    pub pickers: usize,
    /// Meters per second.
    pub speed: f64,
}

impl Default for WorkersConfig {
    fn default() -> Self {
        Self { agvs: 16, pickers: 8, speed: 1.66 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrdersConfig {
    pub mean_length: f64,
    pub min_length: u32,
    pub max_length: u32,
}

impl Default for OrdersConfig {
    fn default() -> Self {
        Self { mean_length: 5.0, min_length: 1, max_length: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyChoice {
    Fm,
    Pdm,
    Random,
    Hsnac,
    Snac,
}

impl std::str::FromStr for PolicyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fm" => Ok(Self::Fm),
            "pdm" => Ok(Self::Pdm),
            "random" => Ok(Self::Random),
            "hsnac" => Ok(Self::Hsnac),
            "snac" => Ok(Self::Snac),
            other => Err(Error::Config(format!("unknown policy {other:?} (fm, pdm, random, hsnac, snac)"))),
        }
    }
}

/// Everything needed to reproduce a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset the file was layered on, if any.
    pub preset: Option<String>,
    pub layout: LayoutConfig,
    pub workers: WorkersConfig,
    pub orders: OrdersConfig,
    pub engine: EngineConfig,
    pub policy: PolicyChoice,
    /// Trained policy file for `hsnac`/`snac` evaluation.
    pub checkpoint: Option<PathBuf>,
    /// Episodes for simulate and eval.
    pub episodes: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub bench: BenchConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ExperimentConfig {
    /// Full-scale setup: 22 aisles of 58 slots, 16 AGVs, 8 pickers, 80 orders, 22 sectors.
    pub fn paper() -> Self {
        Self {
            preset: Some("paper".into()),
            layout: LayoutConfig::default(),
            workers: WorkersConfig::default(),
            orders: OrdersConfig::default(),
            engine: EngineConfig::default(),
            policy: PolicyChoice::Pdm,
            checkpoint: None,
            episodes: 50,
            seed: 0,
            train: TrainConfig::default(),
            bench: BenchConfig::default(),
            output_dir: PathBuf::from("runs"),
        }
    }

    /// Desk-scale setup: 2 aisles of 5 slots, 2 AGVs, 1 picker, 10 orders, 2 sectors.
    pub fn tiny() -> Self {
        let mut c = Self::paper();
        c.preset = Some("tiny".into());
        c.layout = LayoutConfig { aisles: 2, slots_per_aisle: 5, stations: 1, scale: 1.0 / 3.0 };
        c.workers = WorkersConfig { agvs: 2, pickers: 1, speed: 1.66 };
        c.orders = OrdersConfig { mean_length: 3.0, min_length: 1, max_length: 6 };
        c.engine = EngineConfig { orders_per_episode: 10, max_ticks: 1000, ..EngineConfig::default() };
        c.train = TrainConfig {
            episodes: 1000,
            sectors: 2,
            lr: 3e-3,
            eval_interval: 50,
            eval_episodes: 10,
            ..TrainConfig::default()
        };
        c.bench = BenchConfig { n_envs: 1, samples: 2000, warmup: 50, seed: 0 };
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Config(format!("unknown preset {other:?} (paper, tiny)"))),
        }
    }

    /// Parses TOML; a top-level `preset` key layers the file over that preset,
    /// otherwise over `paper`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_layered(text, "paper")
    }

    /// Like [`Self::from_toml_str`] with `fallback` as the preset when the file
    /// names none.
    pub fn from_toml_layered(text: &str, fallback: &str) -> Result<Self> {
        let file: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let base = match file.get("preset") {
            Some(toml::Value::String(p)) => Self::preset(p)?,
            Some(_) => return Err(Error::Config("preset must be a string".into())),
            None => Self::preset(fallback)?,
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(format!("{e}")))?;
        merge(&mut merged, file);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("{e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.layout;
        if l.aisles == 0 || l.slots_per_aisle == 0 || l.stations == 0 {
            return Err(Error::Config("layout needs at least one aisle, slot and station".into()));
        }
        if !(l.scale > 0.0 && l.scale.is_finite()) {
            return Err(Error::Config(format!("layout scale {} must be positive", l.scale)));
        }
        self.worker_spec().validate().map_err(as_config)?;
        self.engine.validate().map_err(as_config)?;
        self.train.validate().map_err(as_config)?;
        OrderProfile::uniform(l.aisles * l.slots_per_aisle, self.orders.mean_length, self.orders.min_length, self.orders.max_length)
            .map_err(as_config)?;
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be positive".into()));
        }
        if self.bench.n_envs == 0 || self.bench.samples == 0 {
            return Err(Error::Config("bench needs n_envs and samples above zero".into()));
        }
        Ok(())
    }

    pub fn worker_spec(&self) -> WorkerSpec {
        WorkerSpec::new(self.workers.agvs, self.workers.pickers, self.workers.speed)
    }

    pub fn graph(&self) -> Result<WarehouseGraph> {
        let l = &self.layout;
        generate_layout(l.aisles, l.slots_per_aisle, l.stations, l.scale)
    }

    pub fn build_env(&self) -> Result<Env> {
        let g = self.graph()?;
        let profile =
            OrderProfile::uniform(g.num_items(), self.orders.mean_length, self.orders.min_length, self.orders.max_length)?;
        let wh = Arc::new(Warehouse::build(g)?);
        Env::new(wh, self.worker_spec(), profile, self.engine.clone())
    }

    /// Hex SHA-256 of the config with run-length and output settings blanked,
    /// so a resumed or extended run keeps the same hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.preset = None;
        c.output_dir = PathBuf::new();
        c.checkpoint = None;
        c.episodes = 0;
        c.train.episodes = 0;
        c.train.eval_interval = 0;
        c.train.eval_episodes = 0;
        c.train.checkpoint_interval = 0;
        c.bench = BenchConfig::default();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
