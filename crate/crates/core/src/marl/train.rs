//! Synchronous advantage actor-critic training.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gae::{gae_semi_markov, standardize};
use super::nn::{Adam, LossCoefs, Mlp};
use super::policy::{ActMode, Algorithm, Decision, LearnedController, NetKind, NetSample, NetworkShape, PolicySet};
use crate::error::{Error, Result};
use crate::policy::run_episode;
use crate::sim::{Env, MetricsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub episodes: usize,
    /// Episodes collected per update.
    pub n_envs: usize,
    pub sectors: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub max_grad_norm: f64,
    pub network: NetworkShape,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// 0 disables periodic checkpoints.
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Hsnac,
            episodes: 8000,
            n_envs: 4,
            sectors: 22,
            gamma: 0.99,
            lambda: 0.95,
            lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            network: NetworkShape::default(),
            eval_interval: 100,
            eval_episodes: 5,
            checkpoint_interval: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("gamma {} and lambda {} must lie in [0, 1]", self.gamma, self.lambda));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 || self.max_grad_norm < 0.0 {
            return bad("loss coefficients and gradient clip must be non-negative".into());
        }
        if self.n_envs == 0 || self.eval_interval == 0 || self.eval_episodes == 0 {
            return bad("n_envs, eval_interval and eval_episodes must be positive".into());
        }
        if self.sectors == 0 {
            return bad("sector count must be positive".into());
        }
        if self.network.worker_hidden.is_empty()
            || self.network.manager_hidden.is_empty()
            || self.network.worker_hidden.iter().chain(&self.network.manager_hidden).any(|&h| h == 0)
        {
            return bad("hidden layers must be non-empty and positive".into());
        }
        Ok(())
    }

    fn coefs(&self) -> LossCoefs {
        LossCoefs { value: self.value_coef, entropy: self.entropy_coef }
    }
}

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    /// Mean greedy-evaluation pick rate (lines per hour).
    pub pick_rate: f64,
    /// Mean per-agent, per-tick training reward since the previous row.
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// A decision with the reward it earned until the agent's next decision.
#[derive(Debug, Clone)]
pub struct Segment {
    pub decision: Decision,
    /// Per-tick rewards discounted to the decision tick.
    pub reward: f64,
    pub ticks: u32,
    pub done: bool,
}

/// All segments of one episode, per agent in time order.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub streams: Vec<Vec<Segment>>,
    pub reward_sum: f64,
    pub agent_ticks: u64,
    pub metrics: MetricsReport,
}

/// splitmix64 finalizer, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x6a09_e667_f3bc_c909);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Plays one sampled episode and records every decision's macro-reward.
pub fn rollout(policy: &PolicySet, env: &mut Env, seed: u64, gamma: f64) -> Result<Rollout> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xac7));
    env.reset(seed);
    policy.check_env(env)?;
    let n = env.num_agents();
    let mut streams: Vec<Vec<Segment>> = vec![Vec::new(); n];
    let mut open: Vec<Option<Segment>> = vec![None; n];
    let mut reward_sum = 0.0;
    let mut agent_ticks = 0;
    while !env.is_done() {
        let (actions, decisions) = policy.act(env, ActMode::Sample, &mut rng)?;
        for d in decisions {
            let i = d.agent;
            if let Some(seg) = open[i].take() {
                streams[i].push(seg);
            }
            open[i] = Some(Segment { decision: d, reward: 0.0, ticks: 0, done: false });
        }
        let info = env.advance(&actions)?;
        for (i, r) in info.rewards.iter().enumerate() {
            reward_sum += r;
            agent_ticks += 1;
            if let Some(seg) = open[i].as_mut() {
                seg.reward += gamma.powi(seg.ticks as i32) * r;
                seg.ticks += 1;
            }
        }
    }
    for (i, seg) in open.into_iter().enumerate() {
        if let Some(mut seg) = seg {
            seg.done = true;
            streams[i].push(seg);
        }
    }
    Ok(Rollout { streams, reward_sum, agent_ticks, metrics: env.episode_metrics()? })
}

struct Sample<'a> {
    net: &'a NetSample,
    advantage: f64,
    target: f64,
}

fn stream_targets(
    segs: &[Segment],
    value: impl Fn(&Segment) -> f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let rewards: Vec<f64> = segs.iter().map(|s| s.reward).collect();
    let ticks: Vec<u32> = segs.iter().map(|s| s.ticks).collect();
    let dones: Vec<bool> = segs.iter().map(|s| s.done).collect();
    let mut values: Vec<f64> = segs.iter().map(value).collect();
    values.push(0.0);
    gae_semi_markov(&rewards, &ticks, &values, &dones, gamma, lambda)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub manager: Option<Adam>,
    pub picker: Adam,
    pub agv: Adam,
}

impl Optimizers {
    fn new(p: &PolicySet, c: &TrainConfig) -> Self {
        let clip = (c.max_grad_norm > 0.0).then_some(c.max_grad_norm);
        Self {
            manager: p.manager.as_ref().map(|m| Adam::new(m, c.lr, clip)),
            picker: Adam::new(&p.picker, c.lr, clip),
            agv: Adam::new(&p.agv, c.lr, clip),
        }
    }

    fn get(&mut self, kind: NetKind) -> Option<&mut Adam> {
        match kind {
            NetKind::Manager => self.manager.as_mut(),
            NetKind::Picker => Some(&mut self.picker),
            NetKind::Agv => Some(&mut self.agv),
        }
    }
}

/// Computes the mean-loss gradient of one network over a batch.
fn batch_grad(net: &Mlp, samples: &[Sample<'_>], coefs: LossCoefs) -> Result<(Mlp, UpdateStats)> {
    let mut grad = net.zeros_like();
    let mut stats = UpdateStats { samples: samples.len(), ..Default::default() };
    let scale = 1.0 / samples.len() as f64;
    for s in samples {
        let l = net.accumulate_grad(
            &s.net.input,
            s.net.head,
            &s.net.mask,
            s.net.action,
            s.advantage,
            s.target,
            coefs,
            scale,
            &mut grad,
        )?;
        stats.policy_loss += l.policy * scale;
        stats.value_loss += l.value * scale;
        stats.entropy += l.entropy * scale;
    }
    Ok((grad, stats))
}

/// Applies one actor-critic update from a batch of episodes.
pub fn update(
    policy: &mut PolicySet,
    optim: &mut Optimizers,
    rollouts: &[Rollout],
    config: &TrainConfig,
) -> Result<Vec<(NetKind, UpdateStats)>> {
    let mut batches: HashMap<NetKind, Vec<Sample<'_>>> = HashMap::new();
    for r in rollouts {
        for (agent, segs) in r.streams.iter().enumerate() {
            if segs.is_empty() {
                continue;
            }
            let (adv, ret) = stream_targets(segs, |s| s.decision.worker.value, config.gamma, config.lambda)?;
            let kind = policy.worker_kind(agent);
            let batch = batches.entry(kind).or_default();
            for ((s, a), t) in segs.iter().zip(adv).zip(ret) {
                batch.push(Sample { net: &s.decision.worker, advantage: a, target: t });
            }
            if policy.manager.is_some() {
                let (adv, ret) = stream_targets(
                    segs,
                    |s| s.decision.manager.as_ref().map_or(0.0, |m| m.value),
                    config.gamma,
                    config.lambda,
                )?;
                let batch = batches.entry(NetKind::Manager).or_default();
                for ((s, a), t) in segs.iter().zip(adv).zip(ret) {
                    if let Some(m) = &s.decision.manager {
                        batch.push(Sample { net: m, advantage: a, target: t });
                    }
                }
            }
        }
    }

    let mut out = Vec::new();
    for kind in [NetKind::Manager, NetKind::Picker, NetKind::Agv] {
        let Some(mut batch) = batches.remove(&kind) else { continue };
        if batch.is_empty() {
            continue;
        }
        let mut adv: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
        if adv.len() >= 2 {
            standardize(&mut adv);
        }
        for (s, a) in batch.iter_mut().zip(adv) {
            s.advantage = a;
        }
        let net = policy.net(kind).ok_or_else(|| Error::Contract("missing network".into()))?;
        let (grad, stats) = batch_grad(net, &batch, config.coefs())?;
        let net = policy.net_mut(kind).expect("checked above");
        optim.get(kind).ok_or_else(|| Error::Contract("missing optimizer".into()))?.step(net, &grad)?;
        if !net.is_finite() {
            return Err(Error::NonFinite(format!("{kind:?} parameters after update")));
        }
        out.push((kind, stats));
    }
    Ok(out)
}

/// Greedy evaluation over fixed seeds; returns the per-episode reports.
pub fn evaluate_policy(policy: &PolicySet, env: &mut Env, episodes: usize, seed: u64) -> Result<Vec<MetricsReport>> {
    let mut c = LearnedController::new(policy.clone(), ActMode::Greedy);
    (0..episodes).map(|e| run_episode(env, &mut c, mix_seed(seed, 1_000_000 + e as u64))).collect()
}

/// Serialized training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub episodes_done: usize,
    pub policy: PolicySet,
    pub optimizers: Optimizers,
    pub curve: Vec<CurvePoint>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

pub struct Trainer {
    pub config: TrainConfig,
    pub config_hash: String,
    pub policy: PolicySet,
    pub optimizers: Optimizers,
    pub episodes_done: usize,
    pub curve: Vec<CurvePoint>,
    env: Env,
    pending: Pending,
}

#[derive(Default)]
struct Pending {
    reward: f64,
    agent_ticks: u64,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    updates: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, env: Env, config_hash: impl Into<String>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x1417));
        let s = env.state();
        let policy = PolicySet::new(
            config.algorithm,
            &env.warehouse().graph,
            s.num_agvs,
            s.num_agents() - s.num_agvs,
            config.sectors,
            &config.network,
            &mut rng,
        )?;
        let optimizers = Optimizers::new(&policy, &config);
        Ok(Self {
            config,
            config_hash: config_hash.into(),
            policy,
            optimizers,
            episodes_done: 0,
            curve: Vec::new(),
            env,
            pending: Pending::default(),
        })
    }

    /// Continues from a checkpoint; the config hash must match.
    pub fn resume(config: TrainConfig, env: Env, config_hash: impl Into<String>, ckpt: Checkpoint) -> Result<Self> {
        let hash = config_hash.into();
        if ckpt.config_hash != hash {
            return Err(Error::Config(format!(
                "checkpoint was written for config {} but the current config hashes to {}",
                ckpt.config_hash, hash
            )));
        }
        let mut t = Self::new(config, env, hash)?;
        ckpt.policy.check_env(&t.env)?;
        t.policy = ckpt.policy;
        t.optimizers = ckpt.optimizers;
        t.episodes_done = ckpt.episodes_done;
        t.curve = ckpt.curve;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: self.config_hash.clone(),
            episodes_done: self.episodes_done,
            policy: self.policy.clone(),
            optimizers: self.optimizers.clone(),
            curve: self.curve.clone(),
        }
    }

    fn collect(&self, count: usize) -> Result<Vec<Rollout>> {
        let seeds: Vec<u64> =
            (0..count).map(|j| mix_seed(self.config.seed, (self.episodes_done + j) as u64)).collect();
        let gamma = self.config.gamma;
        if count == 1 {
            let mut env = self.env.clone();
            return Ok(vec![rollout(&self.policy, &mut env, seeds[0], gamma)?]);
        }
        let policy = &self.policy;
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| {
                    let mut env = self.env.clone();
                    scope.spawn(move || rollout(policy, &mut env, seed, gamma))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("rollout worker panicked".into()))))
                .collect()
        })
    }

    /// Runs one update; returns the number of episodes it consumed.
    pub fn step(&mut self) -> Result<usize> {
        let c = &self.config;
        let next_eval = (self.episodes_done / c.eval_interval + 1) * c.eval_interval;
        let count = c.n_envs.min(c.episodes.saturating_sub(self.episodes_done)).min(next_eval - self.episodes_done);
        if count == 0 {
            return Ok(0);
        }
        let rollouts = self.collect(count)?;
        let stats = update(&mut self.policy, &mut self.optimizers, &rollouts, &self.config)?;
        self.episodes_done += count;

        let p = &mut self.pending;
        for r in &rollouts {
            p.reward += r.reward_sum;
            p.agent_ticks += r.agent_ticks;
        }
        for (_, s) in &stats {
            p.policy_loss += s.policy_loss;
            p.value_loss += s.value_loss;
            p.entropy += s.entropy;
        }
        p.updates += 1;

        if self.episodes_done.is_multiple_of(self.config.eval_interval) {
            let mut env = self.env.clone();
            let reports = evaluate_policy(&self.policy, &mut env, self.config.eval_episodes, self.config.seed)?;
            let pick_rate = reports.iter().map(|r| r.pick_rate_lines_per_hour).sum::<f64>() / reports.len() as f64;
            let p = std::mem::take(&mut self.pending);
            let u = p.updates.max(1) as f64;
            self.curve.push(CurvePoint {
                episode: self.episodes_done,
                pick_rate,
                mean_reward: if p.agent_ticks > 0 { p.reward / p.agent_ticks as f64 } else { 0.0 },
                policy_loss: p.policy_loss / u,
                value_loss: p.value_loss / u,
                entropy: p.entropy / u,
            });
        }
        Ok(count)
    }

    /// Trains until `config.episodes`, writing checkpoints into `dir` if given.
    pub fn run(&mut self, dir: Option<&Path>) -> Result<()> {
        while self.episodes_done < self.config.episodes {
            let before = self.episodes_done;
            self.step()?;
            let every = self.config.checkpoint_interval;
            if let Some(dir) = dir {
                if every > 0 && self.episodes_done / every > before / every {
                    self.checkpoint().save(&checkpoint_path(dir, self.episodes_done))?;
                }
            }
        }
        if let Some(dir) = dir {
            self.checkpoint().save(&dir.join("checkpoint_final.json"))?;
        }
        Ok(())
    }
}

pub fn checkpoint_path(dir: &Path, episodes: usize) -> PathBuf {
    dir.join(format!("checkpoint_{episodes:06}.json"))
}

/// Trains from scratch and returns the final policy and learning curve.
pub fn train(config: &TrainConfig, env: &Env) -> Result<(PolicySet, Vec<CurvePoint>)> {
    let mut t = Trainer::new(config.clone(), env.clone(), "")?;
    t.run(None)?;
    Ok((t.policy, t.curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::EngineConfig;
    use crate::warehouse::{generate_layout, OrderProfile, Warehouse, WorkerSpec};
    use std::sync::Arc;

    fn env() -> Env {
        let g = generate_layout(2, 5, 1, 1.0 / 3.0).unwrap();
        let n = g.num_items();
        let wh = Arc::new(Warehouse::build(g).unwrap());
        let cfg = EngineConfig { orders_per_episode: 4, max_ticks: 300, ..Default::default() };
        Env::new(wh, WorkerSpec::new(2, 1, 1.0), OrderProfile::uniform(n, 2.0, 1, 4).unwrap(), cfg).unwrap()
    }

    fn cfg(algorithm: Algorithm) -> TrainConfig {
        TrainConfig {
            algorithm,
            episodes: 6,
            n_envs: 2,
            sectors: 2,
            eval_interval: 2,
            eval_episodes: 1,
            network: NetworkShape { manager_hidden: vec![16], worker_hidden: vec![8] },
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn curve_length_and_determinism() {
        for algo in [Algorithm::Hsnac, Algorithm::Snac] {
            let (p1, c1) = train(&cfg(algo), &env()).unwrap();
            let (p2, c2) = train(&cfg(algo), &env()).unwrap();
            assert_eq!(c1.len(), 3);
            assert_eq!(c1, c2);
            assert_eq!(p1, p2);
        }
    }

    #[test]
    fn rewards_are_conserved_across_segments() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = PolicySet::new(Algorithm::Hsnac, &e.warehouse().graph, 2, 1, 2, &cfg(Algorithm::Hsnac).network, &mut rng)
            .unwrap();
        let r = rollout(&p, &mut e, 5, 1.0).unwrap();
        let seg_sum: f64 = r.streams.iter().flatten().map(|s| s.reward).sum();
        assert!((seg_sum - r.reward_sum).abs() < 1e-9);
        let ticks: u32 = r.streams[0].iter().map(|s| s.ticks).sum();
        assert_eq!(ticks as u64, r.metrics.ticks);
        for s in &r.streams {
            assert!(s.last().unwrap().done);
            assert_eq!(s.iter().filter(|x| x.done).count(), 1);
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let c = cfg(Algorithm::Hsnac);
        let mut full = Trainer::new(c.clone(), env(), "h").unwrap();
        full.run(None).unwrap();

        let mut first = Trainer::new(TrainConfig { episodes: 4, ..c.clone() }, env(), "h").unwrap();
        first.run(None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        first.checkpoint().save(&path).unwrap();
        let mut second = Trainer::resume(c.clone(), env(), "h", Checkpoint::load(&path).unwrap()).unwrap();
        second.run(None).unwrap();
        assert_eq!(second.curve, full.curve);
        assert_eq!(second.policy, full.policy);

        assert!(Trainer::resume(c, env(), "other", full.checkpoint()).is_err());
    }
}
