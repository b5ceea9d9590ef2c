//! Industry baselines: Follow Me and Pick-Don't-Move, plus their shared route
//! planner (nearest neighbour tour improved by 2-opt).

use crate::error::{Error, Result};
use crate::pathing::{PathCache, SpatialIndex};
use crate::policy::Controller;
use crate::sim::Env;
use crate::warehouse::{item_zones, LocationKind, NodeId, Order, WarehouseGraph};

/// An open tour. `stops[0]` is the start node.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Route {
    pub stops: Vec<NodeId>,
    pub cursor: usize,
}

impl Route {
    pub fn length(&self, cache: &PathCache) -> f64 {
        tour_length(&self.stops, cache)
    }
}

pub fn tour_length(tour: &[NodeId], cache: &PathCache) -> f64 {
    tour.windows(2).map(|w| cache.dist(w[0], w[1])).sum()
}

/// Greedy tour from `start`: always go to the closest unvisited node (lowest id
/// on ties).
pub fn nearest_neighbor_tour(required: &[NodeId], start: NodeId, cache: &PathCache) -> Vec<NodeId> {
    let mut left: Vec<NodeId> = required.to_vec();
    left.sort();
    left.dedup();
    let mut tour = Vec::with_capacity(left.len() + 1);
    tour.push(start);
    let mut cur = start;
    while !left.is_empty() {
        let (k, _) = left
            .iter()
            .enumerate()
            .min_by(|(_, &a), (_, &b)| cache.dist(cur, a).total_cmp(&cache.dist(cur, b)).then(a.cmp(&b)))
            .expect("non-empty");
        cur = left.remove(k);
        tour.push(cur);
    }
    tour
}

/// Segment-reversal local search on an open tour with a fixed first node. Runs
/// until no reversal shortens the tour.
pub fn two_opt(tour: &mut [NodeId], cache: &PathCache) {
    let n = tour.len();
    if n < 3 {
        return;
    }
    let d = |a: NodeId, b: NodeId| cache.dist(a, b);
    loop {
        let mut improved = false;
        for i in 1..n - 1 {
            for j in i + 1..n {
                let before_start = d(tour[i - 1], tour[i]);
                let after_start = d(tour[i - 1], tour[j]);
                let (before_end, after_end) = if j + 1 < n {
                    (d(tour[j], tour[j + 1]), d(tour[i], tour[j + 1]))
                } else {
                    (0.0, 0.0)
                };
                let delta = after_start + after_end - before_start - before_end;
                if delta < -1e-10 {
                    tour[i..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Open tour from `start` through every required node.
pub fn tsp_route(required: &[NodeId], start: NodeId, cache: &PathCache) -> Result<Route> {
    if required.is_empty() {
        return Err(Error::InvalidParameter("route needs at least one required node".into()));
    }
    for &id in required.iter().chain(std::iter::once(&start)) {
        if id.idx() >= cache.len() {
            return Err(Error::UnknownNode(id.0));
        }
        if !cache.dist(start, id).is_finite() {
            return Err(Error::Unreachable { a: start, b: id });
        }
    }
    let mut stops = nearest_neighbor_tour(required, start, cache);
    two_opt(&mut stops, cache);
    Ok(Route { stops, cursor: 0 })
}

fn nearest_station(graph: &WarehouseGraph, cache: &PathCache, from: NodeId) -> NodeId {
    *graph
        .stations()
        .iter()
        .min_by(|&&a, &&b| cache.dist(from, a).total_cmp(&cache.dist(from, b)).then(a.cmp(&b)))
        .expect("layout has a station")
}

fn active(order: &Option<Order>) -> Option<&Order> {
    order.as_ref().filter(|o| !o.is_complete())
}

/// Move to `target` unless already standing there.
fn go(current: NodeId, target: NodeId) -> Option<NodeId> {
    (current != target).then_some(target)
}

/// Where an AGV with nothing left to pick should go.
fn deliver(env: &Env, v: usize) -> Option<NodeId> {
    let w = &env.state().workers[v];
    let g = &env.warehouse().graph;
    match &w.order {
        Some(o) if o.is_complete() => {
            if g.kind(w.current) == LocationKind::DeliveryStation {
                // hand-in happens on the next tick
                Some(w.current)
            } else {
                Some(nearest_station(g, &env.warehouse().paths, w.current))
            }
        }
        _ => None,
    }
}

/// Follow Me: each picker leads a fixed group of AGVs along one route over the
/// group's combined order lines.
#[derive(Debug, Clone, Default)]
pub struct FollowMe {
    /// AGV ids per picker, assigned round-robin.
    pub groups: Vec<Vec<usize>>,
    routes: Vec<Route>,
    signatures: Vec<Vec<(usize, u32)>>,
}

impl FollowMe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn route(&self, picker_index: usize) -> &Route {
        &self.routes[picker_index]
    }

    fn group_needs(env: &Env, group: &[usize], node: NodeId) -> bool {
        let s = env.state();
        let Some(item) = env.warehouse().graph.location(node).item else { return false };
        group.iter().any(|&v| active(&s.workers[v].order).is_some_and(|o| o.needs(item)))
    }

    fn refresh(&mut self, env: &Env) -> Result<()> {
        let s = env.state();
        let g = &env.warehouse().graph;
        for (k, group) in self.groups.iter().enumerate() {
            let sig: Vec<(usize, u32)> = group
                .iter()
                .filter_map(|&v| active(&s.workers[v].order).map(|o| (v, o.seq)))
                .collect();
            if sig == self.signatures[k] {
                continue;
            }
            let picker = &s.workers[s.num_agvs + k];
            let start = if picker.committed { picker.target } else { picker.current };
            let required: Vec<NodeId> = group
                .iter()
                .filter_map(|&v| active(&s.workers[v].order))
                .flat_map(|o| o.remaining_items().map(|it| g.slot_of(it)))
                .collect();
            self.routes[k] = if required.is_empty() {
                Route { stops: vec![start], cursor: 0 }
            } else {
                tsp_route(&required, start, &env.warehouse().paths)?
            };
            self.signatures[k] = sig;
        }
        Ok(())
    }

    /// First stop at or after the cursor still needed by the group.
    fn next_stop(&mut self, env: &Env, k: usize) -> Option<NodeId> {
        let route = &mut self.routes[k];
        while route.cursor < route.stops.len() {
            let stop = route.stops[route.cursor];
            if route.cursor > 0 && Self::group_needs(env, &self.groups[k], stop) {
                return Some(stop);
            }
            route.cursor += 1;
        }
        None
    }
}

impl Controller for FollowMe {
    fn begin_episode(&mut self, env: &Env, _seed: u64) -> Result<()> {
        let s = env.state();
        let pickers = s.num_agents() - s.num_agvs;
        self.groups = vec![Vec::new(); pickers];
        for v in 0..s.num_agvs {
            self.groups[v % pickers].push(v);
        }
        self.routes = vec![Route::default(); pickers];
        self.signatures = vec![vec![(usize::MAX, 0)]; pickers];
        Ok(())
    }

    fn act(&mut self, env: &Env) -> Result<Vec<Option<NodeId>>> {
        self.refresh(env)?;
        let s = env.state();
        let g = &env.warehouse().graph;
        let mut actions = vec![None; s.num_agents()];
        for k in 0..self.groups.len() {
            let next = self.next_stop(env, k);
            let p = s.num_agvs + k;
            if !s.workers[p].committed {
                if let Some(stop) = next {
                    actions[p] = go(s.workers[p].current, stop);
                }
            }
            let route = &self.routes[k];
            for &v in &self.groups[k] {
                let w = &s.workers[v];
                if w.committed {
                    continue;
                }
                actions[v] = match active(&w.order) {
                    Some(order) => {
                        let mine = route.stops[route.cursor.min(route.stops.len())..]
                            .iter()
                            .copied()
                            .find(|&st| g.location(st).item.is_some_and(|it| order.needs(it)))
                            .or_else(|| order.remaining_items().map(|it| g.slot_of(it)).next());
                        mine.and_then(|st| go(w.current, st))
                    }
                    None => deliver(env, v),
                };
            }
        }
        Ok(actions)
    }

    fn name(&self) -> &str {
        "fm"
    }
}

/// Pick-Don't-Move: pickers guard item zones and meet AGVs that stop inside
/// them; AGVs tour their own orders.
#[derive(Debug, Clone, Default)]
pub struct PickDontMove {
    pub zones: Vec<Vec<NodeId>>,
    zone_of: Vec<Option<usize>>,
    home: Vec<NodeId>,
    agv_routes: Vec<Option<(u32, Route)>>,
}

impl PickDontMove {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zone_of(&self, node: NodeId) -> Option<usize> {
        self.zone_of.get(node.idx()).copied().flatten()
    }

    /// Node where the picker of zone `k` waits when nobody needs it.
    pub fn home(&self, k: usize) -> NodeId {
        self.home[k]
    }

    fn agv_next(&mut self, env: &Env, v: usize) -> Result<Option<NodeId>> {
        let s = env.state();
        let g = &env.warehouse().graph;
        let w = &s.workers[v];
        let Some(order) = active(&w.order) else { return Ok(deliver(env, v)) };
        let stale = !matches!(&self.agv_routes[v], Some((seq, _)) if *seq == order.seq);
        if stale {
            let required: Vec<NodeId> = order.remaining_items().map(|it| g.slot_of(it)).collect();
            let route = tsp_route(&required, w.current, &env.warehouse().paths)?;
            self.agv_routes[v] = Some((order.seq, route));
        }
        let (_, route) = self.agv_routes[v].as_mut().expect("route just built");
        while route.cursor < route.stops.len() {
            let stop = route.stops[route.cursor];
            if route.cursor > 0 && g.location(stop).item.is_some_and(|it| order.needs(it)) {
                return Ok(go(w.current, stop));
            }
            route.cursor += 1;
        }
        Ok(None)
    }
}

impl Controller for PickDontMove {
    fn begin_episode(&mut self, env: &Env, _seed: u64) -> Result<()> {
        let s = env.state();
        let g = &env.warehouse().graph;
        let pickers = s.num_agents() - s.num_agvs;
        self.zones = item_zones(g, pickers)?;
        self.zone_of = vec![None; g.len()];
        self.home.clear();
        for (k, zone) in self.zones.iter().enumerate() {
            for id in zone {
                self.zone_of[id.idx()] = Some(k);
            }
            let n = zone.len() as f64;
            let (sx, sy) = zone.iter().fold((0.0, 0.0), |acc, &id| {
                let p = g.position(id);
                (acc.0 + p.0, acc.1 + p.1)
            });
            let pts: Vec<_> = zone.iter().map(|&id| (id, g.position(id))).collect();
            let index = SpatialIndex::from_points(&pts)?;
            self.home.push(index.nearest_node((sx / n, sy / n)));
        }
        self.agv_routes = vec![None; s.num_agvs];
        Ok(())
    }

    fn act(&mut self, env: &Env) -> Result<Vec<Option<NodeId>>> {
        let s = env.state();
        let g = &env.warehouse().graph;
        let cache = &env.warehouse().paths;
        let speed = env.worker_spec().speed;
        let mut actions = vec![None; s.num_agents()];

        // AGVs first so pickers can react to this tick's targets.
        // (service node, seconds until the AGV stands there)
        let mut service: Vec<Option<(NodeId, f64)>> = vec![None; s.num_agvs];
        for v in 0..s.num_agvs {
            let w = &s.workers[v];
            if !w.committed {
                actions[v] = self.agv_next(env, v)?;
            }
            let (node, eta) = match (w.committed, actions[v]) {
                (true, _) => (w.target, w.remaining() / speed),
                (false, Some(t)) => (t, cache.dist(w.current, t) / speed),
                (false, None) => (w.current, 0.0),
            };
            let needed = active(&w.order)
                .zip(g.location(node).item)
                .is_some_and(|(o, it)| o.needs(it));
            if needed {
                service[v] = Some((node, eta));
            }
        }

        for k in 0..self.zones.len() {
            let p = s.num_agvs + k;
            let w = &s.workers[p];
            if w.committed {
                continue;
            }
            let best = service
                .iter()
                .enumerate()
                .filter_map(|(v, sv)| sv.map(|(node, eta)| (v, node, eta)))
                .filter(|&(_, node, _)| self.zone_of(node) == Some(k))
                .map(|(v, node, eta)| {
                    let picker_eta = cache.dist(w.current, node) / speed;
                    (picker_eta.max(eta), v, node)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let target = best.map_or(self.home[k], |(_, _, node)| node);
            actions[p] = go(w.current, target);
        }
        Ok(actions)
    }

    fn name(&self) -> &str {
        "pdm"
    }
}
