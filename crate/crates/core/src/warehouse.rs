//! Warehouse layout, orders, workers and the sector partition.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathing::{PathCache, SpatialIndex};

/// Real-world layout dimensions in meters, before scaling.
const SLOT_PITCH: f64 = 1.5;
const AISLE_PITCH: f64 = 4.5;
const CROSS_AISLE_GAP: f64 = 1.5;
const STATION_GAP: f64 = 3.0;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Item identifier. Item `k` is stored at the `k`-th item slot of the graph.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl ItemId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocationKind {
    ItemSlot,
    IdlePoint,
    DeliveryStation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: NodeId,
    pub kind: LocationKind,
    /// Scaled meters.
    pub position: (f64, f64),
    pub item: Option<ItemId>,
}

/// Undirected location graph with Euclidean edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WarehouseGraph {
    locations: Vec<Location>,
    adjacency: Vec<Vec<(NodeId, f64)>>,
    /// Ratio between modelled and real distances (1/3 models the floor at 1:3).
    scale: f64,
    item_slots: Vec<NodeId>,
    stations: Vec<NodeId>,
    idle_points: Vec<NodeId>,
    bounds: Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

impl Bounds {
    /// Maps a position into the unit square; degenerate axes map to 0.
    pub fn normalize(&self, p: (f64, f64)) -> (f64, f64) {
        let nx = if self.max.0 > self.min.0 {
            (p.0 - self.min.0) / (self.max.0 - self.min.0)
        } else {
            0.0
        };
        let ny = if self.max.1 > self.min.1 {
            (p.1 - self.min.1) / (self.max.1 - self.min.1)
        } else {
            0.0
        };
        (nx, ny)
    }
}

impl WarehouseGraph {
    /// Builds a graph from locations and undirected edges.
    ///
    /// Edge weights are the Euclidean distance between endpoints. Connectivity is
    /// not required here; [`PathCache::precompute`] reports unreachable pairs.
    pub fn new(locations: Vec<Location>, edges: &[(NodeId, NodeId)], scale: f64) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidGraph("no locations".into()));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        let n = locations.len();
        let mut item_slots = Vec::new();
        let mut stations = Vec::new();
        let mut idle_points = Vec::new();
        let mut seen_items = BTreeSet::new();
        let mut seen_pos = std::collections::HashSet::new();
        for (i, loc) in locations.iter().enumerate() {
            if loc.id.idx() != i {
                return Err(Error::InvalidGraph(format!("location ids must be dense, found {} at {i}", loc.id)));
            }
            if !(loc.position.0.is_finite() && loc.position.1.is_finite()) {
                return Err(Error::InvalidGraph(format!("non-finite position at node {i}")));
            }
            if !seen_pos.insert((loc.position.0.to_bits(), loc.position.1.to_bits())) {
                return Err(Error::InvalidGraph(format!("duplicate position at node {i}")));
            }
            match (loc.kind, loc.item) {
                (LocationKind::ItemSlot, Some(item)) => {
                    if !seen_items.insert(item) {
                        return Err(Error::InvalidGraph(format!("item {} stored twice", item.0)));
                    }
                    item_slots.push((item, loc.id));
                }
                (LocationKind::ItemSlot, None) => {
                    return Err(Error::InvalidGraph(format!("item slot {i} holds no item")));
                }
                (_, Some(_)) => {
                    return Err(Error::InvalidGraph(format!("node {i} holds an item but is not a slot")));
                }
                (LocationKind::DeliveryStation, None) => stations.push(loc.id),
                (LocationKind::IdlePoint, None) => idle_points.push(loc.id),
            }
        }
        item_slots.sort();
        for (k, (item, _)) in item_slots.iter().enumerate() {
            if item.idx() != k {
                return Err(Error::InvalidGraph("item ids must be dense".into()));
            }
        }
        let item_slots: Vec<NodeId> = item_slots.into_iter().map(|(_, id)| id).collect();

        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a.idx() >= n || b.idx() >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) references a missing node")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self loop at {a}")));
            }
            if adjacency[a.idx()].iter().any(|&(x, _)| x == b) {
                continue;
            }
            let w = euclid(locations[a.idx()].position, locations[b.idx()].position);
            adjacency[a.idx()].push((b, w));
            adjacency[b.idx()].push((a, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(id, _)| id);
        }

        let mut min = (f64::INFINITY, f64::INFINITY);
        let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for loc in &locations {
            min.0 = min.0.min(loc.position.0);
            min.1 = min.1.min(loc.position.1);
            max.0 = max.0.max(loc.position.0);
            max.1 = max.1.max(loc.position.1);
        }

        Ok(Self {
            locations,
            adjacency,
            scale,
            item_slots,
            stations,
            idle_points,
            bounds: Bounds { min, max },
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn location(&self, id: NodeId) -> &Location {
        &self.locations[id.idx()]
    }

    pub fn position(&self, id: NodeId) -> (f64, f64) {
        self.locations[id.idx()].position
    }

    pub fn kind(&self, id: NodeId) -> LocationKind {
        self.locations[id.idx()].kind
    }

    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[id.idx()]
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, list)| {
            list.iter()
                .filter(move |&&(b, _)| b.idx() > a)
                .map(move |&(b, w)| (NodeId::from(a), b, w))
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Item slots indexed by item id.
    pub fn item_slots(&self) -> &[NodeId] {
        &self.item_slots
    }

    pub fn slot_of(&self, item: ItemId) -> NodeId {
        self.item_slots[item.idx()]
    }

    pub fn stations(&self) -> &[NodeId] {
        &self.stations
    }

    pub fn idle_points(&self) -> &[NodeId] {
        &self.idle_points
    }

    pub fn num_items(&self) -> usize {
        self.item_slots.len()
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.idx() < self.locations.len()
    }

    /// Breadth-first reachability from `start`.
    pub fn reachable_from(&self, start: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start.idx()] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in self.neighbors(u) {
                if !seen[v.idx()] {
                    seen[v.idx()] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        self.reachable_from(NodeId(0)).into_iter().all(|r| r)
    }

    /// Plain-text node and edge listing.
    pub fn export_listing(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nodes={} edges={} scale={}", self.len(), self.edges().count(), self.scale);
        for loc in &self.locations {
            let kind = match loc.kind {
                LocationKind::ItemSlot => "slot",
                LocationKind::IdlePoint => "idle",
                LocationKind::DeliveryStation => "station",
            };
            let item = loc.item.map(|i| i.0.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "node {} {} {:.6} {:.6} {}",
                loc.id, kind, loc.position.0, loc.position.1, item
            );
        }
        for (a, b, w) in self.edges() {
            let _ = writeln!(out, "edge {a} {b} {w:.6}");
        }
        out
    }
}

pub(crate) fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Builds a parallel-aisle layout.
///
/// Every aisle is a column of item slots between a front and a back cross-aisle.
/// The cross-aisle intersections are idle points; delivery stations sit in a row
/// in front of the front cross-aisle, each linked to its nearest intersection.
pub fn generate_layout(
    aisles: usize,
    slots_per_aisle: usize,
    stations: usize,
    scale: f64,
) -> Result<WarehouseGraph> {
    if aisles == 0 || slots_per_aisle == 0 || stations == 0 {
        return Err(Error::InvalidParameter(format!(
            "layout counts must be positive (aisles={aisles}, slots={slots_per_aisle}, stations={stations})"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    let mut locations = Vec::with_capacity(aisles * (slots_per_aisle + 2) + stations);
    let mut edges = Vec::new();
    let mut front = Vec::with_capacity(aisles);
    let mut back = Vec::with_capacity(aisles);
    let back_y = 2.0 * CROSS_AISLE_GAP + (slots_per_aisle - 1) as f64 * SLOT_PITCH;
    let mut next_item = 0u32;

    let push = |locations: &mut Vec<Location>, kind, x: f64, y: f64, item| {
        let id = NodeId::from(locations.len());
        locations.push(Location { id, kind, position: (x * scale, y * scale), item });
        id
    };

    for a in 0..aisles {
        let x = a as f64 * AISLE_PITCH;
        let f = push(&mut locations, LocationKind::IdlePoint, x, 0.0, None);
        front.push(f);
        let mut prev = f;
        for s in 0..slots_per_aisle {
            let y = CROSS_AISLE_GAP + s as f64 * SLOT_PITCH;
            let slot = push(&mut locations, LocationKind::ItemSlot, x, y, Some(ItemId(next_item)));
            next_item += 1;
            edges.push((prev, slot));
            prev = slot;
        }
        let b = push(&mut locations, LocationKind::IdlePoint, x, back_y, None);
        edges.push((prev, b));
        back.push(b);
    }
    for w in front.windows(2).chain(back.windows(2)) {
        edges.push((w[0], w[1]));
    }

    let span = aisles as f64 * AISLE_PITCH;
    for s in 0..stations {
        let x = -AISLE_PITCH / 2.0 + (s as f64 + 0.5) * span / stations as f64;
        let st = push(&mut locations, LocationKind::DeliveryStation, x, -STATION_GAP, None);
        let nearest = (0..aisles)
            .min_by(|&i, &j| {
                let di = (i as f64 * AISLE_PITCH - x).abs();
                let dj = (j as f64 * AISLE_PITCH - x).abs();
                di.total_cmp(&dj).then(i.cmp(&j))
            })
            .expect("at least one aisle");
        edges.push((st, front[nearest]));
    }

    let graph = WarehouseGraph::new(locations, &edges, scale)?;
    debug_assert!(graph.is_connected());
    Ok(graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderLine {
    pub item: ItemId,
    pub quantity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    /// Position of the order in the episode's FIFO sequence.
    pub seq: u32,
    pub lines: Vec<OrderLine>,
    pub remaining: BTreeSet<usize>,
}

impl Order {
    pub fn new(seq: u32, lines: Vec<OrderLine>) -> Self {
        let remaining = (0..lines.len()).collect();
        Self { seq, lines, remaining }
    }

    pub fn is_complete(&self) -> bool {
        self.remaining.is_empty()
    }

    /// Items still to be picked, in line order.
    pub fn remaining_items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.remaining.iter().map(|&i| self.lines[i].item)
    }

    pub fn needs(&self, item: ItemId) -> bool {
        self.remaining_items().any(|it| it == item)
    }

    /// Marks every remaining line for `item` as picked and returns how many.
    pub fn pick(&mut self, item: ItemId) -> usize {
        let hits: Vec<usize> = self
            .remaining
            .iter()
            .copied()
            .filter(|&i| self.lines[i].item == item)
            .collect();
        for i in &hits {
            self.remaining.remove(i);
        }
        hits.len()
    }
}

/// Order-length distribution and item popularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderProfile {
    pub mean_length: f64,
    pub min_length: u32,
    pub max_length: u32,
    pub item_weights: Vec<f64>,
}

impl OrderProfile {
    pub fn uniform(num_items: usize, mean_length: f64, min_length: u32, max_length: u32) -> Result<Self> {
        if num_items == 0 {
            return Err(Error::InvalidParameter("order profile needs at least one item".into()));
        }
        let profile = Self {
            mean_length,
            min_length,
            max_length,
            item_weights: vec![1.0 / num_items as f64; num_items],
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_length == 0 {
            return Err(Error::InvalidParameter("minimum order length must be >= 1".into()));
        }
        let (lo, hi) = (self.min_length as f64, self.max_length as f64);
        if !(lo <= self.mean_length && self.mean_length <= hi) {
            return Err(Error::InvalidParameter(format!(
                "order length bounds violate min <= mean <= max ({} <= {} <= {})",
                self.min_length, self.mean_length, self.max_length
            )));
        }
        if self.item_weights.is_empty() || self.item_weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::InvalidParameter("item weights must be non-negative".into()));
        }
        let total: f64 = self.item_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("item weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// Probability of drawing order length `len` before truncation to the item count.
    ///
    /// Lengths are `min + Poisson(mean - min)`, conditioned on not exceeding `max`.
    pub fn length_pmf(&self, len: u32) -> f64 {
        if len < self.min_length || len > self.max_length {
            return 0.0;
        }
        let lambda = self.mean_length - self.min_length as f64;
        let poisson = |k: u32| -> f64 {
            if lambda == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            let mut p = (-lambda).exp();
            for j in 1..=k {
                p *= lambda / j as f64;
            }
            p
        };
        let norm: f64 = (0..=self.max_length - self.min_length).map(poisson).sum();
        poisson(len - self.min_length) / norm
    }

    fn sample_length<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let lambda = self.mean_length - self.min_length as f64;
        if lambda <= 0.0 {
            return self.min_length;
        }
        let dist = Poisson::new(lambda).expect("positive finite rate");
        loop {
            let extra: f64 = dist.sample(rng);
            let len = self.min_length as f64 + extra;
            if len <= self.max_length as f64 {
                return len as u32;
            }
        }
    }
}

/// Draws one order: a length from the profile, then distinct items by weight.
pub fn sample_order<R: Rng + ?Sized>(profile: &OrderProfile, seq: u32, rng: &mut R) -> Order {
    let available = profile.item_weights.iter().filter(|w| **w > 0.0).count();
    let len = (profile.sample_length(rng) as usize).min(available);
    let mut weights = profile.item_weights.clone();
    let mut total: f64 = weights.iter().sum();
    let mut lines = Vec::with_capacity(len);
    for _ in 0..len {
        let mut u = rng.random::<f64>() * total;
        let mut chosen = None;
        for (k, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            chosen = Some(k);
            if u < w {
                break;
            }
            u -= w;
        }
        let k = chosen.expect("a positive weight remains");
        total -= weights[k];
        weights[k] = 0.0;
        lines.push(OrderLine { item: ItemId(k as u32), quantity: 1 });
    }
    Order::new(seq, lines)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSpec {
    pub agvs: usize,
    pub pickers: usize,
    /// Meters per second in the scaled layout.
    pub speed: f64,
    /// Start nodes; agent `i` (AGVs first, then pickers) starts at `start[i % len]`.
    /// Empty means idle points followed by delivery stations.
    #[serde(default)]
    pub start_locations: Vec<NodeId>,
}

impl WorkerSpec {
    pub fn new(agvs: usize, pickers: usize, speed: f64) -> Self {
        Self { agvs, pickers, speed, start_locations: Vec::new() }
    }

    pub fn num_agents(&self) -> usize {
        self.agvs + self.pickers
    }

    pub fn validate(&self) -> Result<()> {
        if self.agvs == 0 || self.pickers == 0 {
            return Err(Error::InvalidParameter("need at least one AGV and one picker".into()));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidParameter(format!("speed must be positive, got {}", self.speed)));
        }
        Ok(())
    }

    /// Resolved start nodes for every agent.
    pub fn starts(&self, graph: &WarehouseGraph) -> Result<Vec<NodeId>> {
        let pool: Vec<NodeId> = if self.start_locations.is_empty() {
            graph.idle_points().iter().chain(graph.stations()).copied().collect()
        } else {
            self.start_locations.clone()
        };
        if let Some(bad) = pool.iter().find(|id| !graph.contains(**id)) {
            return Err(Error::UnknownNode(bad.0));
        }
        if self.agvs > pool.len() {
            return Err(Error::InvalidParameter(format!(
                "{} AGVs but only {} start locations",
                self.agvs,
                pool.len()
            )));
        }
        Ok((0..self.num_agents()).map(|i| pool[i % pool.len()]).collect())
    }
}

/// Disjoint sectors covering every location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorPartition {
    /// Member ids of each sector in ascending order.
    pub sectors: Vec<Vec<NodeId>>,
    /// Sector index of every location.
    pub assignment: Vec<usize>,
}

impl SectorPartition {
    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    pub fn sector_of(&self, id: NodeId) -> usize {
        self.assignment[id.idx()]
    }

    pub fn max_sector_size(&self) -> usize {
        self.sectors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Position of `id` within its sector's member list.
    pub fn local_index(&self, id: NodeId) -> usize {
        let s = &self.sectors[self.sector_of(id)];
        s.binary_search(&id).expect("node belongs to its own sector")
    }
}

/// Sorts ids column-major (x, then y, then id) and cuts them into `k` runs whose
/// sizes differ by at most one.
fn column_bands(graph: &WarehouseGraph, mut ids: Vec<NodeId>, k: usize) -> Vec<Vec<NodeId>> {
    ids.sort_by(|&a, &b| {
        let (pa, pb) = (graph.position(a), graph.position(b));
        pa.0.total_cmp(&pb.0).then(pa.1.total_cmp(&pb.1)).then(a.cmp(&b))
    });
    let n = ids.len();
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut it = ids.into_iter();
    for s in 0..k {
        let size = base + usize::from(s < extra);
        let mut band: Vec<NodeId> = it.by_ref().take(size).collect();
        band.sort();
        out.push(band);
    }
    out
}

/// Splits the item slots into `k` contiguous column bands (used for picker zones).
pub fn item_zones(graph: &WarehouseGraph, k: usize) -> Result<Vec<Vec<NodeId>>> {
    if k == 0 || k > graph.num_items() {
        return Err(Error::InvalidParameter(format!(
            "zone count {k} must lie in 1..={}",
            graph.num_items()
        )));
    }
    Ok(column_bands(graph, graph.item_slots().to_vec(), k))
}

/// Partitions all locations into `k` spatially contiguous sectors.
///
/// When `k` does not exceed the number of item slots, the slots are cut into
/// column bands of near-equal size and every other location joins the sector of
/// its nearest slot. Otherwise all locations are banded directly.
pub fn partition_sectors(graph: &WarehouseGraph, k: usize) -> Result<SectorPartition> {
    if k == 0 || k > graph.len() {
        return Err(Error::InvalidParameter(format!(
            "sector count {k} must lie in 1..={}",
            graph.len()
        )));
    }
    let mut sectors = if k <= graph.num_items() {
        let mut bands = column_bands(graph, graph.item_slots().to_vec(), k);
        let mut owner = vec![usize::MAX; graph.len()];
        for (s, band) in bands.iter().enumerate() {
            for id in band {
                owner[id.idx()] = s;
            }
        }
        for loc in graph.locations() {
            if loc.kind == LocationKind::ItemSlot {
                continue;
            }
            let nearest = graph
                .item_slots()
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let da = euclid(graph.position(a), loc.position);
                    let db = euclid(graph.position(b), loc.position);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("at least one slot");
            bands[owner[nearest.idx()]].push(loc.id);
        }
        bands
    } else {
        column_bands(graph, (0..graph.len()).map(NodeId::from).collect(), k)
    };
    let mut assignment = vec![0; graph.len()];
    for (s, members) in sectors.iter_mut().enumerate() {
        members.sort();
        for id in members.iter() {
            assignment[id.idx()] = s;
        }
    }
    Ok(SectorPartition { sectors, assignment })
}

/// A layout together with its path cache and spatial index, shared read-only by
/// every simulator instance.
#[derive(Debug)]
pub struct Warehouse {
    pub graph: WarehouseGraph,
    pub paths: PathCache,
    pub index: SpatialIndex,
}

impl Warehouse {
    pub fn build(graph: WarehouseGraph) -> Result<Self> {
        let paths = PathCache::precompute(&graph)?;
        let index = SpatialIndex::build(&graph)?;
        Ok(Self { graph, paths, index })
    }
}
