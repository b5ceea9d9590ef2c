//! Learned controllers: hierarchical (manager picks a sector, worker picks a
//! location inside it) and flat (worker picks any location).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::Mlp;
use crate::agent::{self, ObservationLayout};
use crate::error::{Error, Result};
use crate::policy::Controller;
use crate::sim::Env;
use crate::warehouse::{partition_sectors, NodeId, SectorPartition, WarehouseGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Manager over sectors plus sector-scoped workers.
    Hsnac,
    /// Workers choose directly among all locations.
    Snac,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hsnac" => Ok(Algorithm::Hsnac),
            "snac" => Ok(Algorithm::Snac),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub manager_hidden: Vec<usize>,
    pub worker_hidden: Vec<usize>,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self { manager_hidden: vec![128, 128, 128], worker_hidden: vec![64, 64] }
    }
}

/// Parameters of every network plus what is needed to interpret their outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    pub algorithm: Algorithm,
    pub sectors: SectorPartition,
    pub num_agvs: usize,
    pub num_agents: usize,
    /// One policy/value head per agent over the sectors.
    pub manager: Option<Mlp>,
    pub picker: Mlp,
    pub agv: Mlp,
}

/// Which network a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetKind {
    Manager,
    Picker,
    Agv,
}

/// One sampled action together with what the update needs to replay it.
#[derive(Debug, Clone)]
pub struct NetSample {
    pub input: Arc<[f64]>,
    pub head: usize,
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Decision {
    pub agent: usize,
    pub target: NodeId,
    pub worker: NetSample,
    pub manager: Option<NetSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

fn one_hot_append(obs: &mut Vec<f64>, k: usize, s: usize) {
    obs.extend((0..k).map(|j| if j == s { 1.0 } else { 0.0 }));
}

/// Index drawn from `probs` (or its argmax, lowest index on ties).
pub fn select_action<R: Rng + ?Sized>(probs: &[f64], mode: ActMode, rng: &mut R) -> usize {
    match mode {
        ActMode::Greedy => {
            let mut best = 0;
            for (j, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = j;
                }
            }
            best
        }
        ActMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = 0;
            for (j, &p) in probs.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                acc += p;
                last = j;
                if u < acc {
                    return j;
                }
            }
            last
        }
    }
}

impl PolicySet {
    pub fn new<R: Rng + ?Sized>(
        algorithm: Algorithm,
        graph: &WarehouseGraph,
        num_agvs: usize,
        num_pickers: usize,
        sectors: usize,
        shape: &NetworkShape,
        rng: &mut R,
    ) -> Result<Self> {
        let num_agents = num_agvs + num_pickers;
        let items = graph.num_items();
        let picker_obs = ObservationLayout::picker(num_agents, num_agvs, items).len();
        let agv_obs = ObservationLayout::agv(num_agents, items).len();
        let (sectors, manager, worker_in, worker_out) = match algorithm {
            Algorithm::Hsnac => {
                let part = partition_sectors(graph, sectors)?;
                let k = part.len();
                let heads = vec![k; num_agents];
                let manager = Mlp::new(picker_obs, &shape.manager_hidden, &heads, rng);
                let out = part.max_sector_size();
                (part, Some(manager), k, out)
            }
            Algorithm::Snac => (partition_sectors(graph, 1)?, None, 0, graph.len()),
        };
        let picker = Mlp::new(picker_obs + worker_in, &shape.worker_hidden, &[worker_out], rng);
        let agv = Mlp::new(agv_obs + worker_in, &shape.worker_hidden, &[worker_out], rng);
        Ok(Self { algorithm, sectors, num_agvs, num_agents, manager, picker, agv })
    }

    pub fn net(&self, kind: NetKind) -> Option<&Mlp> {
        match kind {
            NetKind::Manager => self.manager.as_ref(),
            NetKind::Picker => Some(&self.picker),
            NetKind::Agv => Some(&self.agv),
        }
    }

    pub fn net_mut(&mut self, kind: NetKind) -> Option<&mut Mlp> {
        match kind {
            NetKind::Manager => self.manager.as_mut(),
            NetKind::Picker => Some(&mut self.picker),
            NetKind::Agv => Some(&mut self.agv),
        }
    }

    pub fn worker_kind(&self, agent: usize) -> NetKind {
        if agent < self.num_agvs {
            NetKind::Agv
        } else {
            NetKind::Picker
        }
    }

    /// Checks that the networks were built for this environment.
    pub fn check_env(&self, env: &Env) -> Result<()> {
        let s = env.state();
        if s.num_agvs != self.num_agvs || s.num_agents() != self.num_agents {
            return Err(Error::InvalidParameter(format!(
                "policy built for {} agents ({} AGVs), environment has {} ({})",
                self.num_agents,
                self.num_agvs,
                s.num_agents(),
                s.num_agvs
            )));
        }
        if self.sectors.assignment.len() != env.warehouse().graph.len() {
            return Err(Error::LayoutMismatch);
        }
        Ok(())
    }

    /// Chooses targets for every uncommitted agent.
    pub fn act<R: Rng + ?Sized>(&self, env: &Env, mode: ActMode, rng: &mut R) -> Result<(Vec<Option<NodeId>>, Vec<Decision>)> {
        let g = &env.warehouse().graph;
        let s = env.state();
        let n = env.num_agents();
        let mut actions = vec![None; n];
        let mut decisions = Vec::new();
        let pending: Vec<usize> = env.uncommitted().collect();
        if pending.is_empty() {
            return Ok((actions, decisions));
        }

        let manager_pass = match &self.manager {
            Some(m) => {
                let input: Arc<[f64]> = agent::manager_observation(g, s).into();
                let pass = m.trunk_forward(&input)?;
                Some((input, pass))
            }
            None => None,
        };

        for i in pending {
            let full = agent::mask_for(g, s, i);
            if !full.any() {
                return Err(Error::AllMasked);
            }
            let obs = env.observation(i);
            let kind = self.worker_kind(i);
            let net = self.net(kind).expect("worker nets always exist");
            match (&self.manager, &manager_pass) {
                (Some(manager), Some((m_input, pass))) => {
                    let k = self.sectors.len();
                    let sector_mask: Vec<bool> =
                        self.sectors.sectors.iter().map(|m| m.iter().any(|&id| full.allows(id))).collect();
                    let out = manager.output(pass, i, Some(&sector_mask))?;
                    let sector = select_action(&out.probs, mode, rng);
                    let m_sample = NetSample {
                        input: m_input.clone(),
                        head: i,
                        mask: sector_mask,
                        action: sector,
                        log_prob: out.probs[sector].ln(),
                        value: out.value,
                    };

                    let members = &self.sectors.sectors[sector];
                    let width = self.sectors.max_sector_size();
                    let mask: Vec<bool> = (0..width).map(|j| members.get(j).is_some_and(|&id| full.allows(id))).collect();
                    let mut input = obs;
                    one_hot_append(&mut input, k, sector);
                    let w_out = net.forward(&input, 0, Some(&mask))?;
                    let local = select_action(&w_out.probs, mode, rng);
                    let target = members[local];
                    actions[i] = Some(target);
                    decisions.push(Decision {
                        agent: i,
                        target,
                        worker: NetSample {
                            input: input.into(),
                            head: 0,
                            mask,
                            action: local,
                            log_prob: w_out.probs[local].ln(),
                            value: w_out.value,
                        },
                        manager: Some(m_sample),
                    });
                }
                _ => {
                    let w_out = net.forward(&obs, 0, Some(&full.0))?;
                    let a = select_action(&w_out.probs, mode, rng);
                    let target = NodeId::from(a);
                    actions[i] = Some(target);
                    decisions.push(Decision {
                        agent: i,
                        target,
                        worker: NetSample {
                            input: obs.into(),
                            head: 0,
                            mask: full.0,
                            action: a,
                            log_prob: w_out.probs[a].ln(),
                            value: w_out.value,
                        },
                        manager: None,
                    });
                }
            }
        }
        Ok((actions, decisions))
    }
}

/// A [`PolicySet`] driving an environment, for evaluation and the CLI.
#[derive(Debug, Clone)]
pub struct LearnedController {
    pub policy: PolicySet,
    pub mode: ActMode,
    rng: ChaCha8Rng,
    label: String,
}

impl LearnedController {
    pub fn new(policy: PolicySet, mode: ActMode) -> Self {
        let label = match policy.algorithm {
            Algorithm::Hsnac => "hsnac",
            Algorithm::Snac => "snac",
        }
        .to_string();
        Self { policy, mode, rng: ChaCha8Rng::seed_from_u64(0), label }
    }
}

impl Controller for LearnedController {
    fn begin_episode(&mut self, env: &Env, seed: u64) -> Result<()> {
        self.policy.check_env(env)?;
        self.rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        Ok(())
    }

    fn act(&mut self, env: &Env) -> Result<Vec<Option<NodeId>>> {
        Ok(self.policy.act(env, self.mode, &mut self.rng)?.0)
    }

    fn name(&self) -> &str {
        &self.label
    }
}
