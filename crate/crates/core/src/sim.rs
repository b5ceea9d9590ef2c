//! The multi-agent order-picking environment.
//!
//! Time advances in fixed ticks. An agent without a commitment picks a target
//! node, then travels along the cached shortest path until it arrives; only then
//! may it choose again. Items move from a picker to an AGV instantly when both
//! stand at the item's slot, and an AGV that has all its lines and stands at a
//! delivery station hands in the order and takes the next one from the queue.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent;
use crate::error::{Error, Result};
use crate::warehouse::{
    sample_order, LocationKind, NodeId, Order, OrderProfile, Warehouse, WorkerSpec,
};

/// Remaining path length below which a worker counts as arrived.
pub const ARRIVAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Agv,
    Picker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Seconds per tick.
    pub dt: f64,
    pub orders_per_episode: usize,
    pub max_ticks: u64,
    /// Keep a per-tick event log in [`StepInfo::events`].
    pub record_events: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { dt: 5.0, orders_per_episode: 80, max_ticks: 20_000, record_events: false }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.orders_per_episode == 0 {
            return Err(Error::InvalidParameter("orders_per_episode must be >= 1".into()));
        }
        if self.max_ticks == 0 {
            return Err(Error::InvalidParameter("max_ticks must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub id: usize,
    pub role: Role,
    /// Last node reached.
    pub current: NodeId,
    pub target: NodeId,
    pub committed: bool,
    /// Meters travelled along `path`.
    pub path_progress: f64,
    pub path_length: f64,
    path: Vec<NodeId>,
    leg: usize,
    edge_offset: f64,
    /// Current order (AGVs only).
    pub order: Option<Order>,
    pub order_assigned_at: f64,
}

impl WorkerState {
    fn new(id: usize, role: Role, at: NodeId) -> Self {
        Self {
            id,
            role,
            current: at,
            target: at,
            committed: false,
            path_progress: 0.0,
            path_length: 0.0,
            path: vec![at],
            leg: 0,
            edge_offset: 0.0,
            order: None,
            order_assigned_at: 0.0,
        }
    }

    pub fn path(&self) -> &[NodeId] {
        &self.path
    }

    /// Interpolated position in scaled meters.
    pub fn position(&self, wh: &Warehouse) -> (f64, f64) {
        let a = wh.graph.position(self.path[self.leg]);
        if self.leg + 1 >= self.path.len() || self.edge_offset == 0.0 {
            return a;
        }
        let b = wh.graph.position(self.path[self.leg + 1]);
        let len = wh.paths.dist(self.path[self.leg], self.path[self.leg + 1]);
        let t = (self.edge_offset / len).clamp(0.0, 1.0);
        (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
    }

    /// Remaining travel in scaled meters.
    pub fn remaining(&self) -> f64 {
        (self.path_length - self.path_progress).max(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsAccumulator {
    /// Real (unscaled) meters per worker.
    pub distance_m: Vec<f64>,
    pub idle_s: Vec<f64>,
    pub lines_picked: u64,
    pub picks_by_worker: Vec<u64>,
    pub lead_times_s: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub tick: u64,
    pub clock: f64,
    pub num_agvs: usize,
    pub workers: Vec<WorkerState>,
    pub queue: VecDeque<Order>,
    pub completed: usize,
    pub total_orders: usize,
    pub total_lines: u64,
    pub metrics: MetricsAccumulator,
    pub rng: ChaCha8Rng,
    pub done: bool,
}

impl SimState {
    pub fn num_agents(&self) -> usize {
        self.workers.len()
    }

    pub fn agvs(&self) -> &[WorkerState] {
        &self.workers[..self.num_agvs]
    }

    pub fn pickers(&self) -> &[WorkerState] {
        &self.workers[self.num_agvs..]
    }

    pub fn role(&self, i: usize) -> Role {
        self.workers[i].role
    }

    pub fn in_flight(&self) -> usize {
        self.agvs().iter().filter(|w| w.order.is_some()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Commit,
    Arrive,
    Pick,
    Complete,
    Assign,
}

/// One line of the JSON-lines event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub agent: usize,
    pub event: EventKind,
    pub location: NodeId,
    /// The AGV served by a pick.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub partner: Option<usize>,
}

/// What happened to each agent during one tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutcome {
    /// Order-lines transferred by each picker.
    pub picked: Vec<u32>,
    /// Order-lines received by each AGV.
    pub received: Vec<u32>,
    pub completed: Vec<bool>,
    pub moved: Vec<bool>,
}

impl TickOutcome {
    fn new(n: usize) -> Self {
        Self {
            picked: vec![0; n],
            received: vec![0; n],
            completed: vec![false; n],
            moved: vec![false; n],
        }
    }

    pub fn participated(&self, i: usize) -> bool {
        self.picked[i] > 0 || self.received[i] > 0 || self.completed[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub rewards: Vec<f64>,
    pub done: bool,
    pub outcome: TickOutcome,
    pub events: Vec<Event>,
}

/// Gym-style step result.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ticks: u64,
    pub clock_s: f64,
    pub lines_picked: u64,
    pub orders_completed: usize,
    pub pick_rate_lines_per_hour: f64,
    /// Mean real meters per AGV.
    pub agv_distance_m: f64,
    /// Mean real meters per picker.
    pub picker_distance_m: f64,
    /// Mean idle seconds per AGV.
    pub agv_idle_s: f64,
    /// Mean idle seconds per picker.
    pub picker_idle_s: f64,
    pub mean_lead_time_s: f64,
}

/// Pick rate in order-lines per hour.
pub fn pick_rate(lines: u64, clock_s: f64) -> f64 {
    if clock_s <= 0.0 {
        0.0
    } else {
        lines as f64 / (clock_s / 3600.0)
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    warehouse: Arc<Warehouse>,
    workers: WorkerSpec,
    profile: OrderProfile,
    config: EngineConfig,
    starts: Vec<NodeId>,
    state: SimState,
}

impl Env {
    pub fn new(
        warehouse: Arc<Warehouse>,
        workers: WorkerSpec,
        profile: OrderProfile,
        config: EngineConfig,
    ) -> Result<Self> {
        workers.validate()?;
        config.validate()?;
        profile.validate()?;
        if profile.item_weights.len() != warehouse.graph.num_items() {
            return Err(Error::InvalidParameter(format!(
                "order profile covers {} items but the layout has {}",
                profile.item_weights.len(),
                warehouse.graph.num_items()
            )));
        }
        let starts = workers.starts(&warehouse.graph)?;
        let mut env = Self {
            warehouse,
            workers,
            profile,
            config,
            starts,
            state: SimState {
                tick: 0,
                clock: 0.0,
                num_agvs: 0,
                workers: Vec::new(),
                queue: VecDeque::new(),
                completed: 0,
                total_orders: 0,
                total_lines: 0,
                metrics: MetricsAccumulator::default(),
                rng: ChaCha8Rng::seed_from_u64(0),
                done: true,
            },
        };
        env.reset(0);
        Ok(env)
    }

    pub fn warehouse(&self) -> &Arc<Warehouse> {
        &self.warehouse
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn worker_spec(&self) -> &WorkerSpec {
        &self.workers
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Swaps in a hand-built state, e.g. to set up a specific situation in tests.
    pub fn replace_state(&mut self, state: SimState) {
        self.state = state;
    }

    pub fn num_agents(&self) -> usize {
        self.state.workers.len()
    }

    pub fn is_done(&self) -> bool {
        self.state.done
    }

    /// Agents that must supply an action this tick.
    pub fn uncommitted(&self) -> impl Iterator<Item = usize> + '_ {
        self.state.workers.iter().filter(|w| !w.committed).map(|w| w.id)
    }

    /// Starts a new episode: samples every order, places workers and hands the
    /// first orders to the AGVs.
    pub fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut queue: VecDeque<Order> = (0..self.config.orders_per_episode)
            .map(|i| sample_order(&self.profile, i as u32, &mut rng))
            .collect();
        let total_lines = queue.iter().map(|o| o.lines.len() as u64).sum();
        let n = self.workers.num_agents();
        let mut workers = Vec::with_capacity(n);
        for i in 0..n {
            let role = if i < self.workers.agvs { Role::Agv } else { Role::Picker };
            let mut w = WorkerState::new(i, role, self.starts[i]);
            if role == Role::Agv {
                w.order = queue.pop_front();
            }
            workers.push(w);
        }
        self.state = SimState {
            tick: 0,
            clock: 0.0,
            num_agvs: self.workers.agvs,
            workers,
            queue,
            completed: 0,
            total_orders: self.config.orders_per_episode,
            total_lines,
            metrics: MetricsAccumulator {
                distance_m: vec![0.0; n],
                idle_s: vec![0.0; n],
                lines_picked: 0,
                picks_by_worker: vec![0; n],
                lead_times_s: Vec::new(),
            },
            rng,
            done: false,
        };
        self.observations()
    }

    pub fn observation(&self, i: usize) -> Vec<f64> {
        match self.state.role(i) {
            Role::Agv => agent::agv_observation(&self.warehouse.graph, &self.state, i),
            Role::Picker => agent::picker_observation(&self.warehouse.graph, &self.state, i),
        }
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.num_agents()).map(|i| self.observation(i)).collect()
    }

    /// Whether `target` is a legal new commitment for uncommitted agent `i`.
    ///
    /// AGVs may only head for slots of their remaining lines (stations once the
    /// order is done). Pickers may head for any item slot, stay put, or go to any
    /// node in their action mask.
    pub fn is_legal(&self, i: usize, target: NodeId) -> bool {
        let g = &self.warehouse.graph;
        if !g.contains(target) {
            return false;
        }
        match self.state.role(i) {
            Role::Agv => agent::agv_allows(g, &self.state, i, target),
            Role::Picker => {
                g.kind(target) == LocationKind::ItemSlot
                    || target == self.state.workers[i].current
                    || agent::picker_allows(&self.state, target)
            }
        }
    }

    /// Gym-style step: [`Env::advance`] followed by fresh observations.
    pub fn step(&mut self, actions: &[Option<NodeId>]) -> Result<Transition> {
        let info = self.advance(actions)?;
        Ok(Transition {
            observations: self.observations(),
            rewards: info.rewards.clone(),
            done: info.done,
            info,
        })
    }

    /// Advances one tick.
    ///
    /// `actions[i]` is `Some(target)` for a new commitment or `None` to wait. A
    /// committed agent must pass `None`; violations leave the state untouched.
    pub fn advance(&mut self, actions: &[Option<NodeId>]) -> Result<StepInfo> {
        if self.state.done {
            return Err(Error::EpisodeOver);
        }
        let n = self.num_agents();
        if actions.len() != n {
            return Err(Error::LengthMismatch(format!("{} actions for {n} agents", actions.len())));
        }
        for (i, a) in actions.iter().enumerate() {
            if let Some(t) = *a {
                if self.state.workers[i].committed {
                    return Err(Error::Contract(format!("agent {i} is committed but received action {t}")));
                }
                if !self.is_legal(i, t) {
                    return Err(Error::Contract(format!("action {t} is masked for agent {i}")));
                }
            }
        }

        let wh = Arc::clone(&self.warehouse);
        let g = &wh.graph;
        let dt = self.config.dt;
        let tick = self.state.tick;
        let record = self.config.record_events;
        let mut events = Vec::new();
        let mut out = TickOutcome::new(n);

        // 1. new commitments
        for (i, a) in actions.iter().enumerate() {
            let Some(target) = *a else { continue };
            let w = &mut self.state.workers[i];
            w.path = wh.paths.shortest_path(w.current, target)?;
            w.path_length = wh.paths.dist(w.current, target);
            w.path_progress = 0.0;
            w.leg = 0;
            w.edge_offset = 0.0;
            w.target = target;
            w.committed = true;
            if record {
                events.push(Event { tick, agent: i, event: EventKind::Commit, location: target, partner: None });
            }
        }

        // 2. travel
        let step_len = self.workers.speed * dt;
        for i in 0..n {
            let w = &mut self.state.workers[i];
            if !w.committed {
                continue;
            }
            let mut budget = step_len;
            let mut moved = 0.0;
            while w.leg + 1 < w.path.len() {
                let (a, b) = (w.path[w.leg], w.path[w.leg + 1]);
                let rest = wh.paths.dist(a, b) - w.edge_offset;
                if budget >= rest - ARRIVAL_EPS {
                    budget -= rest;
                    moved += rest;
                    w.leg += 1;
                    w.edge_offset = 0.0;
                    w.current = b;
                } else {
                    w.edge_offset += budget;
                    moved += budget;
                    break;
                }
            }
            w.path_progress = (w.path_progress + moved).min(w.path_length);
            if moved > 0.0 {
                out.moved[i] = true;
                self.state.metrics.distance_m[i] += moved / g.scale();
            }
            if w.leg + 1 >= w.path.len() {
                w.committed = false;
                w.path_progress = w.path_length;
                if record {
                    events.push(Event { tick, agent: i, event: EventKind::Arrive, location: w.current, partner: None });
                }
            }
        }

        // 3. picks: a standing AGV and a standing picker at a slot holding a needed item
        let num_agvs = self.state.num_agvs;
        for v in 0..num_agvs {
            let (at, item) = {
                let w = &self.state.workers[v];
                if w.committed {
                    continue;
                }
                let Some(item) = g.location(w.current).item else { continue };
                match &w.order {
                    Some(o) if o.needs(item) => (w.current, item),
                    _ => continue,
                }
            };
            let picker = (num_agvs..n).find(|&p| {
                let w = &self.state.workers[p];
                !w.committed && w.current == at
            });
            let Some(p) = picker else { continue };
            let lines = self.state.workers[v].order.as_mut().expect("checked above").pick(item) as u32;
            out.picked[p] += lines;
            out.received[v] += lines;
            self.state.metrics.lines_picked += lines as u64;
            self.state.metrics.picks_by_worker[p] += lines as u64;
            if record {
                events.push(Event { tick, agent: p, event: EventKind::Pick, location: at, partner: Some(v) });
            }
        }

        // 4. order completion and FIFO reassignment
        let end_clock = (tick + 1) as f64 * dt;
        for v in 0..num_agvs {
            let w = &mut self.state.workers[v];
            if w.committed || g.kind(w.current) != LocationKind::DeliveryStation {
                continue;
            }
            if !w.order.as_ref().is_some_and(Order::is_complete) {
                continue;
            }
            self.state.metrics.lead_times_s.push(end_clock - w.order_assigned_at);
            self.state.completed += 1;
            out.completed[v] = true;
            if record {
                events.push(Event { tick, agent: v, event: EventKind::Complete, location: w.current, partner: None });
            }
            w.order = self.state.queue.pop_front();
            w.order_assigned_at = end_clock;
            if record && w.order.is_some() {
                events.push(Event { tick, agent: v, event: EventKind::Assign, location: w.current, partner: None });
            }
        }

        // 5. rewards and idle time
        let rewards: Vec<f64> = (0..n).map(|i| agent::reward(self.state.role(i), &out, i)).collect();
        for i in 0..n {
            if !out.moved[i] && !out.participated(i) {
                self.state.metrics.idle_s[i] += dt;
            }
        }

        self.state.tick += 1;
        self.state.clock = self.state.tick as f64 * dt;
        self.state.done = self.state.completed == self.state.total_orders || self.state.tick >= self.config.max_ticks;
        Ok(StepInfo { rewards, done: self.state.done, outcome: out, events })
    }

    /// End-of-episode report. Fails while the episode is still running.
    pub fn episode_metrics(&self) -> Result<MetricsReport> {
        if !self.state.done {
            return Err(Error::EpisodeRunning);
        }
        Ok(report_from(&self.state))
    }
}

pub(crate) fn report_from(s: &SimState) -> MetricsReport {
    let m = &s.metrics;
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let v = s.num_agvs;
    MetricsReport {
        ticks: s.tick,
        clock_s: s.clock,
        lines_picked: m.lines_picked,
        orders_completed: s.completed,
        pick_rate_lines_per_hour: pick_rate(m.lines_picked, s.clock),
        agv_distance_m: mean(&m.distance_m[..v]),
        picker_distance_m: mean(&m.distance_m[v..]),
        agv_idle_s: mean(&m.idle_s[..v]),
        picker_idle_s: mean(&m.idle_s[v..]),
        mean_lead_time_s: mean(&m.lead_times_s),
    }
}
