//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns JSON strings so the page needs no generated types.
//! The `*_json` functions are plain Rust and are what the native tests call.

use orderpick::config::ExperimentConfig;
use orderpick::heuristics::{nearest_neighbor_tour, tour_length, tsp_route, FollowMe, PickDontMove};
use orderpick::policy::{Controller, RandomPolicy};
use orderpick::sim::{Env, Role};
use orderpick::warehouse::{LocationKind, NodeId};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn preset(name: &str) -> Result<ExperimentConfig, String> {
    ExperimentConfig::preset(name).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct LayoutView {
    width: f64,
    height: f64,
    min: (f64, f64),
    locations: Vec<(f64, f64, &'static str)>,
    edges: Vec<(u32, u32)>,
}

fn kind_name(k: LocationKind) -> &'static str {
    match k {
        LocationKind::ItemSlot => "slot",
        LocationKind::IdlePoint => "idle",
        LocationKind::DeliveryStation => "station",
    }
}

/// Node positions, kinds and edges of a preset layout.
pub fn layout_json(preset_name: &str) -> Result<String, String> {
    let g = preset(preset_name)?.graph().map_err(|e| e.to_string())?;
    let b = g.bounds();
    let view = LayoutView {
        width: b.max.0 - b.min.0,
        height: b.max.1 - b.min.1,
        min: b.min,
        locations: g.locations().iter().map(|l| (l.position.0, l.position.1, kind_name(l.kind))).collect(),
        edges: g.edges().map(|(a, b, _)| (a.0, b.0)).collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct WorkerView {
    role: Role,
    x: f64,
    y: f64,
    target: u32,
    carrying: usize,
}

#[derive(Serialize)]
struct Snapshot {
    tick: u64,
    clock_s: f64,
    done: bool,
    lines_picked: u64,
    total_lines: u64,
    orders_completed: usize,
    total_orders: usize,
    pick_rate: f64,
    workers: Vec<WorkerView>,
}

/// A running episode under one of the built-in controllers.
pub struct Demo {
    env: Env,
    controller: Box<dyn Controller>,
}

impl Demo {
    pub fn new(preset_name: &str, policy: &str, seed: u64) -> Result<Self, String> {
        let cfg = preset(preset_name)?;
        let controller: Box<dyn Controller> = match policy {
            "fm" => Box::new(FollowMe::new()),
            "pdm" => Box::new(PickDontMove::new()),
            "random" => Box::new(RandomPolicy::new(seed)),
            other => return Err(format!("unknown policy {other:?} (fm, pdm, random)")),
        };
        let env = cfg.build_env().map_err(|e| e.to_string())?;
        let mut demo = Self { env, controller };
        demo.reset(seed)?;
        Ok(demo)
    }

    pub fn reset(&mut self, seed: u64) -> Result<(), String> {
        self.env.reset(seed);
        self.controller.begin_episode(&self.env, seed).map_err(|e| e.to_string())
    }

    /// Advances up to `ticks` ticks; stops early when the episode ends.
    pub fn step(&mut self, ticks: u32) -> Result<(), String> {
        for _ in 0..ticks {
            if self.env.is_done() {
                break;
            }
            let actions = self.controller.act(&self.env).map_err(|e| e.to_string())?;
            self.env.advance(&actions).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn snapshot_json(&self) -> Result<String, String> {
        let s = self.env.state();
        let wh = self.env.warehouse();
        let snap = Snapshot {
            tick: s.tick,
            clock_s: s.clock,
            done: self.env.is_done(),
            lines_picked: s.metrics.lines_picked,
            total_lines: s.total_lines,
            orders_completed: s.completed,
            total_orders: s.total_orders,
            pick_rate: orderpick::sim::pick_rate(s.metrics.lines_picked, s.clock),
            workers: s
                .workers
                .iter()
                .map(|w| {
                    let (x, y) = w.position(wh);
                    WorkerView {
                        role: w.role,
                        x,
                        y,
                        target: w.target.0,
                        carrying: w.order.as_ref().map_or(0, |o| o.lines.len() - o.remaining.len()),
                    }
                })
                .collect(),
        };
        serde_json::to_string(&snap).map_err(|e| e.to_string())
    }
}

#[derive(Serialize)]
struct TspView {
    start: u32,
    stops: Vec<u32>,
    nearest_neighbour: Vec<u32>,
    nearest_neighbour_m: f64,
    two_opt: Vec<u32>,
    two_opt_m: f64,
}

/// Random pick list of `n` slots routed by nearest neighbour and by 2-opt.
pub fn tsp_json(preset_name: &str, n: usize, seed: u64) -> Result<String, String> {
    let env = preset(preset_name)?.build_env().map_err(|e| e.to_string())?;
    let wh = env.warehouse();
    let slots = wh.graph.item_slots();
    if n == 0 || n > slots.len() {
        return Err(format!("need between 1 and {} stops", slots.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stops: Vec<NodeId> = sample(&mut rng, slots.len(), n).into_iter().map(|i| slots[i]).collect();
    let start = wh.graph.stations()[0];
    let nn = nearest_neighbor_tour(&stops, start, &wh.paths);
    let opt = tsp_route(&stops, start, &wh.paths).map_err(|e| e.to_string())?;
    let ids = |v: &[NodeId]| v.iter().map(|n| n.0).collect::<Vec<_>>();
    let real = 1.0 / wh.graph.scale();
    let view = TspView {
        start: start.0,
        stops: ids(&stops),
        nearest_neighbour_m: tour_length(&nn, &wh.paths) * real,
        nearest_neighbour: ids(&nn),
        two_opt_m: opt.length(&wh.paths) * real,
        two_opt: ids(&opt.stops),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

fn js(e: String) -> JsValue {
    JsValue::from_str(&e)
}

#[wasm_bindgen(js_name = layout)]
pub fn layout_js(preset: &str) -> Result<String, JsValue> {
    layout_json(preset).map_err(js)
}

#[wasm_bindgen(js_name = tspDemo)]
pub fn tsp_js(preset: &str, stops: usize, seed: u64) -> Result<String, JsValue> {
    tsp_json(preset, stops, seed).map_err(js)
}

#[wasm_bindgen]
pub struct Simulation {
    inner: Demo,
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(constructor)]
    pub fn new(preset: &str, policy: &str, seed: u64) -> Result<Simulation, JsValue> {
        Demo::new(preset, policy, seed).map(|inner| Simulation { inner }).map_err(js)
    }

    pub fn reset(&mut self, seed: u64) -> Result<(), JsValue> {
        self.inner.reset(seed).map_err(js)
    }

    pub fn step(&mut self, ticks: u32) -> Result<String, JsValue> {
        self.inner.step(ticks).map_err(js)?;
        self.inner.snapshot_json().map_err(js)
    }

    pub fn snapshot(&self) -> Result<String, JsValue> {
        self.inner.snapshot_json().map_err(js)
    }
}
