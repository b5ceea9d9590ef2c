//! Environment throughput measurement under a random policy.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marl::train::mix_seed;
use crate::policy::{Controller, RandomPolicy};
use crate::sim::Env;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_envs: usize,
    /// Timed samples; one sample is one step of every environment.
    pub samples: usize,
    /// Untimed steps run first.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n_envs: 4, samples: 300, warmup: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_envs: usize,
    pub samples: usize,
    pub warmup: usize,
    pub agents: usize,
    pub locations: usize,
    /// Vectorized steps per second over all timed samples.
    pub steps_per_second: f64,
    /// Standard deviation of the per-sample rates.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub threads: usize,
}

struct Slot {
    env: Env,
    policy: RandomPolicy,
    episode: u64,
    seed: u64,
}

impl Slot {
    fn restart(&mut self) -> Result<()> {
        let s = mix_seed(self.seed, self.episode);
        self.episode += 1;
        self.env.reset(s);
        self.policy.begin_episode(&self.env, s)
    }

    fn step(&mut self) -> Result<()> {
        if self.env.is_done() {
            self.restart()?;
        }
        let actions = self.policy.act(&self.env)?;
        self.env.step(&actions)?;
        Ok(())
    }
}

fn step_all(slots: &mut [Slot], threads: usize) -> Result<()> {
    if threads <= 1 {
        return slots.iter_mut().try_for_each(Slot::step);
    }
    let per = slots.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = slots
            .chunks_mut(per)
            .map(|chunk| scope.spawn(move || chunk.iter_mut().try_for_each(Slot::step)))
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("bench worker panicked".into()))))
    })
}

/// Steps `n_envs` copies of `env` in lockstep under a random policy.
pub fn bench(env: &Env, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.n_envs == 0 || cfg.samples == 0 {
        return Err(Error::InvalidParameter("bench needs at least one env and one sample".into()));
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cfg.n_envs);
    let mut slots: Vec<Slot> = (0..cfg.n_envs)
        .map(|j| {
            let seed = mix_seed(cfg.seed, 0xbe4c + j as u64);
            Slot { env: env.clone(), policy: RandomPolicy::new(seed), episode: 0, seed }
        })
        .collect();
    for s in &mut slots {
        s.restart()?;
    }
    for _ in 0..cfg.warmup {
        step_all(&mut slots, threads)?;
    }
    let mut rates = Vec::with_capacity(cfg.samples);
    let mut total = 0.0;
    for _ in 0..cfg.samples {
        let t = Instant::now();
        step_all(&mut slots, threads)?;
        let dt = t.elapsed().as_secs_f64().max(1e-9);
        total += dt;
        rates.push(1.0 / dt);
    }
    let n = rates.len() as f64;
    let mean_rate = rates.iter().sum::<f64>() / n;
    let std = (rates.iter().map(|r| (r - mean_rate).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    Ok(BenchReport {
        n_envs: cfg.n_envs,
        samples: cfg.samples,
        warmup: cfg.warmup,
        agents: env.num_agents(),
        locations: env.warehouse().graph.len(),
        steps_per_second: n / total,
        std,
        min: rates.iter().copied().fold(f64::INFINITY, f64::min),
        max: rates.iter().copied().fold(0.0, f64::max),
        threads,
    })
}
