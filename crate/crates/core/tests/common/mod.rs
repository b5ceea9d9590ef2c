//! Reference implementations shared by the integration tests and the
//! acceptance harness. They favour obviousness over speed.
#![allow(dead_code)]

use orderpick::config::ExperimentConfig;
use orderpick::heuristics::{FollowMe, PickDontMove};
use orderpick::marl::nn::{LossCoefs, Mlp};
use orderpick::pathing::PathCache;
use orderpick::policy::Controller;
use orderpick::sim::{Env, Event, EventKind, MetricsReport};
use orderpick::warehouse::{ItemId, Location, LocationKind, NodeId, WarehouseGraph};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Connected graph on `n` random points: a random spanning tree plus extra edges.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> WarehouseGraph {
    let locations: Vec<Location> = (0..n)
        .map(|i| Location {
            id: NodeId(i as u32),
            kind: LocationKind::IdlePoint,
            position: (rng.random_range(0.0..50.0), rng.random_range(0.0..50.0)),
            item: None,
        })
        .collect();
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((NodeId(i as u32), NodeId(rng.random_range(0..i) as u32)));
    }
    for _ in 0..rng.random_range(0..=2 * n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            edges.push((NodeId(a as u32), NodeId(b as u32)));
        }
    }
    WarehouseGraph::new(locations, &edges, 1.0).unwrap()
}

/// Quadratic Dijkstra from `src`: distances and predecessors.
pub fn dijkstra(g: &WarehouseGraph, src: NodeId) -> (Vec<f64>, Vec<Option<NodeId>>) {
    let n = g.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![None; n];
    let mut done = vec![false; n];
    dist[src.idx()] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n).filter(|&u| !done[u]).min_by(|&a, &b| dist[a].total_cmp(&dist[b])) else {
            break;
        };
        if !dist[u].is_finite() {
            break;
        }
        done[u] = true;
        for &(v, w) in g.neighbors(NodeId(u as u32)) {
            if dist[u] + w < dist[v.idx()] {
                dist[v.idx()] = dist[u] + w;
                prev[v.idx()] = Some(NodeId(u as u32));
            }
        }
    }
    (dist, prev)
}

/// Shortest `a -> b` path by running the oracle from `b` and walking
/// predecessors back from `a` (the graph is undirected).
pub fn oracle_path(g: &WarehouseGraph, a: NodeId, b: NodeId) -> (f64, Vec<NodeId>) {
    let (dist, prev) = dijkstra(g, b);
    let mut path = vec![a];
    let mut cur = a;
    while cur != b {
        cur = prev[cur.idx()].expect("connected");
        path.push(cur);
    }
    (dist[a.idx()], path)
}

/// Nearest point by linear scan, lowest index on ties.
pub fn linear_nearest(points: &[(f64, f64)], p: (f64, f64)) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, q) in points.iter().enumerate() {
        let d = (q.0 - p.0).powi(2) + (q.1 - p.1).powi(2);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Shortest open tour from `start` through all of `required`, by enumeration.
pub fn brute_force_tour(start: NodeId, required: &[NodeId], cache: &PathCache) -> f64 {
    fn go(cur: NodeId, left: &mut Vec<NodeId>, acc: f64, cache: &PathCache, best: &mut f64) {
        if left.is_empty() {
            *best = best.min(acc);
            return;
        }
        for k in 0..left.len() {
            let next = left.swap_remove(k);
            go(next, left, acc + cache.dist(cur, next), cache, best);
            left.push(next);
            let last = left.len() - 1;
            left.swap(k, last);
        }
    }
    let mut left: Vec<NodeId> = required.to_vec();
    left.sort();
    left.dedup();
    let mut best = f64::INFINITY;
    go(start, &mut left, 0.0, cache, &mut best);
    best
}

/// Advantages as the explicit double sum over future TD errors.
pub fn brute_force_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let t = rewards.len();
    let delta: Vec<f64> = (0..t)
        .map(|i| rewards[i] + gamma * values[i + 1] * if dones[i] { 0.0 } else { 1.0 } - values[i])
        .collect();
    (0..t)
        .map(|i| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in i..t {
                sum += w * delta[k];
                if dones[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            sum
        })
        .collect()
}

/// Largest relative error between the analytic gradient and central differences.
pub fn fd_max_rel_error(net: &Mlp, head: usize, input: &[f64], mask: &[bool], action: usize) -> f64 {
    let coefs = LossCoefs { value: 0.5, entropy: 0.01 };
    let (adv, target) = (0.7, -0.3);
    let mut grad = net.zeros_like();
    net.accumulate_grad(input, head, mask, action, adv, target, coefs, 1.0, &mut grad).unwrap();
    let analytic = grad.to_flat();
    let base = net.to_flat();
    let mut probe = net.clone();
    let mut params = base.clone();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut loss_at = |k: usize, x: f64| {
        params[k] = x;
        probe.set_flat(&params);
        let l = probe.sample_loss(input, head, mask, action, adv, target, coefs).unwrap();
        params[k] = base[k];
        l
    };
    for k in 0..base.len() {
        // fourth-order central difference
        let numeric = (-loss_at(k, base[k] + 2.0 * h) + 8.0 * loss_at(k, base[k] + h) - 8.0 * loss_at(k, base[k] - h)
            + loss_at(k, base[k] - 2.0 * h))
            / (12.0 * h);
        let a = analytic[k];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

/// Fresh net with every parameter jittered, so no pre-activation sits exactly
/// on the ReLU kink.
pub fn random_net(rng: &mut ChaCha8Rng, inputs: usize, hidden: &[usize], heads: &[usize]) -> Mlp {
    let mut net = Mlp::new(inputs, hidden, heads, rng);
    let mut flat = net.to_flat();
    flat.iter_mut().for_each(|p| *p += rng.random_range(-0.1..0.1));
    net.set_flat(&flat);
    net
}

pub fn random_input(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn tiny_env(record_events: bool) -> Env {
    let mut cfg = ExperimentConfig::tiny();
    cfg.engine.record_events = record_events;
    cfg.build_env().unwrap()
}

pub fn heuristic(name: &str) -> Box<dyn Controller> {
    match name {
        "fm" => Box::new(FollowMe::new()),
        "pdm" => Box::new(PickDontMove::new()),
        other => panic!("unknown heuristic {other}"),
    }
}

/// Full trace of one episode.
#[derive(Debug, PartialEq)]
pub struct Trace {
    pub events: Vec<Event>,
    pub rewards: Vec<Vec<f64>>,
    pub report: MetricsReport,
    pub total_lines: u64,
    pub total_orders: usize,
    pub completed: usize,
    pub queue_left: usize,
    pub in_flight: usize,
    /// Every generated (order, item) line at reset.
    pub lines: Vec<(u32, ItemId)>,
    /// (order, item) for each pick event, in order.
    pub picked: Vec<(u32, ItemId)>,
}

pub fn trace_episode(env: &mut Env, ctl: &mut dyn Controller, seed: u64) -> Trace {
    env.reset(seed);
    ctl.begin_episode(env, seed).unwrap();
    let s = env.state();
    let orders = s.agvs().iter().filter_map(|w| w.order.as_ref()).chain(s.queue.iter());
    let lines = orders.flat_map(|o| o.lines.iter().map(move |l| (o.seq, l.item))).collect();
    let mut picked = Vec::new();
    let mut events = Vec::new();
    let mut rewards = Vec::new();
    while !env.is_done() {
        let actions = ctl.act(env).unwrap();
        let before: Vec<Option<u32>> = env.state().agvs().iter().map(|w| w.order.as_ref().map(|o| o.seq)).collect();
        let info = env.advance(&actions).unwrap();
        for e in info.events.iter().filter(|e| e.event == EventKind::Pick) {
            let seq = before[e.partner.expect("pick names its AGV")].expect("AGV had an order");
            let item = env.warehouse().graph.location(e.location).item.expect("picks happen at slots");
            picked.push((seq, item));
        }
        events.extend(info.events);
        rewards.push(info.rewards);
    }
    let s = env.state();
    Trace {
        events,
        rewards,
        report: env.episode_metrics().unwrap(),
        total_lines: s.total_lines,
        total_orders: s.total_orders,
        completed: s.completed,
        queue_left: s.queue.len(),
        in_flight: s.in_flight(),
        lines,
        picked,
    }
}
