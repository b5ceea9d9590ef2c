//! Observations, rewards and legal-action masks.
//!
//! Locations are encoded as coordinates normalised to the layout's bounding box;
//! orders are multi-hot vectors over item slots with a one for every line still
//! to be picked. Each worker sees its own current/target pair first, followed by
//! the other agents in index order, so a shared network can tell itself apart.

use crate::sim::{Role, SimState, TickOutcome};
use crate::warehouse::{LocationKind, NodeId, WarehouseGraph};

pub const PICK_REWARD: f64 = 0.1;
pub const RECEIVE_REWARD: f64 = 0.1;
pub const COMPLETE_REWARD: f64 = 0.1;
pub const STEP_PENALTY: f64 = -0.05;

/// Segment boundaries of an observation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationLayout {
    pub num_agents: usize,
    pub num_items: usize,
    /// Number of order blocks (all AGVs for pickers and the manager, one for AGVs).
    pub order_blocks: usize,
}

impl ObservationLayout {
    pub fn picker(num_agents: usize, num_agvs: usize, num_items: usize) -> Self {
        Self { num_agents, num_items, order_blocks: num_agvs }
    }

    pub fn agv(num_agents: usize, num_items: usize) -> Self {
        Self { num_agents, num_items, order_blocks: 1 }
    }

    pub fn positions(&self) -> std::ops::Range<usize> {
        0..self.num_agents * 4
    }

    pub fn orders(&self) -> std::ops::Range<usize> {
        let start = self.num_agents * 4;
        start..start + self.order_blocks * self.num_items
    }

    pub fn len(&self) -> usize {
        self.num_agents * 4 + self.order_blocks * self.num_items
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn push_agent(out: &mut Vec<f64>, graph: &WarehouseGraph, state: &SimState, i: usize) {
    let b = graph.bounds();
    let w = &state.workers[i];
    let c = b.normalize(graph.position(w.current));
    let t = b.normalize(graph.position(w.target));
    out.extend_from_slice(&[c.0, c.1, t.0, t.1]);
}

fn push_positions(out: &mut Vec<f64>, graph: &WarehouseGraph, state: &SimState, ego: Option<usize>) {
    if let Some(e) = ego {
        push_agent(out, graph, state, e);
    }
    for i in 0..state.num_agents() {
        if Some(i) != ego {
            push_agent(out, graph, state, i);
        }
    }
}

fn push_order(out: &mut Vec<f64>, graph: &WarehouseGraph, state: &SimState, v: usize) {
    let start = out.len();
    out.resize(start + graph.num_items(), 0.0);
    if let Some(order) = &state.workers[v].order {
        for item in order.remaining_items() {
            out[start + item.idx()] = 1.0;
        }
    }
}

/// Picker view: every agent's current and target location plus every AGV's
/// remaining order.
pub fn picker_observation(graph: &WarehouseGraph, state: &SimState, i: usize) -> Vec<f64> {
    debug_assert_eq!(state.role(i), Role::Picker);
    let layout = ObservationLayout::picker(state.num_agents(), state.num_agvs, graph.num_items());
    let mut out = Vec::with_capacity(layout.len());
    push_positions(&mut out, graph, state, Some(i));
    for v in 0..state.num_agvs {
        push_order(&mut out, graph, state, v);
    }
    out
}

/// AGV view: every agent's current and target location plus its own order.
pub fn agv_observation(graph: &WarehouseGraph, state: &SimState, v: usize) -> Vec<f64> {
    debug_assert_eq!(state.role(v), Role::Agv);
    let layout = ObservationLayout::agv(state.num_agents(), graph.num_items());
    let mut out = Vec::with_capacity(layout.len());
    push_positions(&mut out, graph, state, Some(v));
    push_order(&mut out, graph, state, v);
    out
}

/// Manager view: the picker content in plain agent-index order.
pub fn manager_observation(graph: &WarehouseGraph, state: &SimState) -> Vec<f64> {
    let layout = ObservationLayout::picker(state.num_agents(), state.num_agvs, graph.num_items());
    let mut out = Vec::with_capacity(layout.len());
    push_positions(&mut out, graph, state, None);
    for v in 0..state.num_agvs {
        push_order(&mut out, graph, state, v);
    }
    out
}

/// Per-tick reward: +0.1 for a pick (pickers), +0.1 for receiving an item or
/// completing an order (AGVs), otherwise -0.05.
pub fn reward(role: Role, outcome: &TickOutcome, i: usize) -> f64 {
    match role {
        Role::Picker => {
            if outcome.picked[i] > 0 {
                PICK_REWARD
            } else {
                STEP_PENALTY
            }
        }
        Role::Agv => {
            let received = outcome.received[i] > 0;
            let completed = outcome.completed[i];
            // items are received at slots, orders completed at stations
            debug_assert!(!(received && completed));
            match (received, completed) {
                (false, false) => STEP_PENALTY,
                (r, c) => RECEIVE_REWARD * f64::from(u8::from(r)) + COMPLETE_REWARD * f64::from(u8::from(c)),
            }
        }
    }
}

/// Restriction applied on top of a role's mask.
#[derive(Debug, Clone, Copy)]
pub enum MaskScope<'a> {
    All,
    /// Ascending member ids of one sector.
    Sector(&'a [NodeId]),
}

impl MaskScope<'_> {
    fn admits(&self, id: NodeId) -> bool {
        match self {
            MaskScope::All => true,
            MaskScope::Sector(members) => members.binary_search(&id).is_ok(),
        }
    }
}

/// Legal targets over all locations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask(pub Vec<bool>);

impl ActionMask {
    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|b| *b)
    }

    pub fn allows(&self, id: NodeId) -> bool {
        self.0.get(id.idx()).copied().unwrap_or(false)
    }

    pub fn legal(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| NodeId::from(i))
    }
}

/// Whether AGV `v` may head for `node`: a slot of a remaining line, or a
/// delivery station once nothing is left.
pub fn agv_allows(graph: &WarehouseGraph, state: &SimState, v: usize, node: NodeId) -> bool {
    match &state.workers[v].order {
        Some(order) if !order.is_complete() => {
            graph.location(node).item.is_some_and(|item| order.needs(item))
        }
        _ => graph.kind(node) == LocationKind::DeliveryStation,
    }
}

/// Whether `node` is some AGV's current or target location.
pub fn picker_allows(state: &SimState, node: NodeId) -> bool {
    state.agvs().iter().any(|w| w.current == node || w.target == node)
}

pub fn agv_mask(graph: &WarehouseGraph, state: &SimState, v: usize, scope: MaskScope<'_>) -> ActionMask {
    let mut mask = vec![false; graph.len()];
    match &state.workers[v].order {
        Some(order) if !order.is_complete() => {
            for item in order.remaining_items() {
                let slot = graph.slot_of(item);
                if scope.admits(slot) {
                    mask[slot.idx()] = true;
                }
            }
        }
        _ => {
            for &st in graph.stations() {
                if scope.admits(st) {
                    mask[st.idx()] = true;
                }
            }
        }
    }
    ActionMask(mask)
}

/// Current and target locations of all AGVs; the picker's own location when
/// none of them falls inside the scope.
pub fn picker_mask(graph: &WarehouseGraph, state: &SimState, p: usize, scope: MaskScope<'_>) -> ActionMask {
    let mut mask = vec![false; graph.len()];
    for w in state.agvs() {
        for node in [w.current, w.target] {
            if scope.admits(node) {
                mask[node.idx()] = true;
            }
        }
    }
    let mut mask = ActionMask(mask);
    if !mask.any() {
        mask.0[state.workers[p].current.idx()] = true;
    }
    mask
}

/// Unscoped mask for any agent.
pub fn mask_for(graph: &WarehouseGraph, state: &SimState, i: usize) -> ActionMask {
    match state.role(i) {
        Role::Agv => agv_mask(graph, state, i, MaskScope::All),
        Role::Picker => picker_mask(graph, state, i, MaskScope::All),
    }
}
