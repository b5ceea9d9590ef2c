//! All-pairs shortest paths and coordinate-to-node lookup.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::warehouse::{NodeId, WarehouseGraph};

const DUMP_MAGIC: &[u8; 8] = b"OPPATH01";

/// Distance and next-hop tables for every ordered node pair.
///
/// Column `b` of both tables comes from one Dijkstra run rooted at `b`:
/// `dist(a, b)` is the length found by that run and `next_hop(a, b)` is the
/// neighbour of `a` on the way to `b`. Paths are rebuilt hop by hop, which keeps
/// the footprint at 12 bytes per pair instead of storing every path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCache {
    n: usize,
    dist: Vec<f64>,
    next: Vec<u32>,
    layout_hash: [u8; 32],
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source Dijkstra. Returns distances and shortest-path-tree parents;
/// equal-length alternatives prefer the lower-id parent.
fn dijkstra(graph: &WarehouseGraph, root: NodeId) -> (Vec<f64>, Vec<u32>) {
    let n = graph.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![u32::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[root.idx()] = 0.0;
    parent[root.idx()] = root.0;
    heap.push(HeapEntry { dist: 0.0, node: root.0 });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        let u = node as usize;
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in graph.neighbors(NodeId(node)) {
            let vi = v.idx();
            if done[vi] {
                continue;
            }
            let nd = d + w;
            if nd < dist[vi] {
                dist[vi] = nd;
                parent[vi] = node;
                heap.push(HeapEntry { dist: nd, node: v.0 });
            } else if nd == dist[vi] && node < parent[vi] {
                parent[vi] = node;
            }
        }
    }
    (dist, parent)
}

/// Stable digest of a layout: positions, kinds, items, edges and scale.
pub fn layout_hash(graph: &WarehouseGraph) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((graph.len() as u64).to_le_bytes());
    h.update(graph.scale().to_le_bytes());
    for loc in graph.locations() {
        h.update(loc.position.0.to_le_bytes());
        h.update(loc.position.1.to_le_bytes());
        h.update([loc.kind as u8]);
        h.update(loc.item.map_or(u32::MAX, |i| i.0).to_le_bytes());
    }
    for (a, b, _) in graph.edges() {
        h.update(a.0.to_le_bytes());
        h.update(b.0.to_le_bytes());
    }
    h.finalize().into()
}

impl PathCache {
    /// Runs one Dijkstra per node. Fails on the first unreachable pair.
    pub fn precompute(graph: &WarehouseGraph) -> Result<Self> {
        let n = graph.len();
        let mut dist = vec![0.0; n * n];
        let mut next = vec![0u32; n * n];
        for b in 0..n {
            let (d, parent) = dijkstra(graph, NodeId::from(b));
            for a in 0..n {
                if parent[a] == u32::MAX {
                    return Err(Error::Unreachable { a: NodeId::from(a), b: NodeId::from(b) });
                }
                dist[a * n + b] = d[a];
                next[a * n + b] = parent[a];
            }
        }
        Ok(Self { n, dist, next, layout_hash: layout_hash(graph) })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn layout_hash(&self) -> &[u8; 32] {
        &self.layout_hash
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.idx() < self.n {
            Ok(())
        } else {
            Err(Error::UnknownNode(id.0))
        }
    }

    /// Shortest-path length in scaled meters. Panics on out-of-range ids.
    #[inline]
    pub fn dist(&self, a: NodeId, b: NodeId) -> f64 {
        self.dist[a.idx() * self.n + b.idx()]
    }

    #[inline]
    pub fn next_hop(&self, a: NodeId, b: NodeId) -> NodeId {
        NodeId(self.next[a.idx() * self.n + b.idx()])
    }

    pub fn try_dist(&self, a: NodeId, b: NodeId) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.dist(a, b))
    }

    /// Node sequence from `a` to `b`, both inclusive.
    pub fn shortest_path(&self, a: NodeId, b: NodeId) -> Result<Vec<NodeId>> {
        self.check(a)?;
        self.check(b)?;
        let mut path = vec![a];
        let mut cur = a;
        while cur != b {
            cur = self.next_hop(cur, b);
            path.push(cur);
            debug_assert!(path.len() <= self.n, "next-hop cycle");
        }
        Ok(path)
    }

    /// Approximate heap footprint of the tables in bytes.
    pub fn memory_bytes(&self) -> usize {
        self.dist.len() * std::mem::size_of::<f64>() + self.next.len() * std::mem::size_of::<u32>()
    }

    /// Writes the tables in a little-endian binary format keyed by the layout hash.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&self.layout_hash)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.n * self.n * 12);
        for d in &self.dist {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for h in &self.next {
            buf.extend_from_slice(&h.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Loads a dump written by [`PathCache::write_to`], rejecting dumps made for a
    /// different layout.
    pub fn read_from<R: Read>(mut r: R, graph: &WarehouseGraph) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::InvalidParameter("not a path cache dump".into()));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        if hash != layout_hash(graph) {
            return Err(Error::LayoutMismatch);
        }
        let mut n8 = [0u8; 8];
        r.read_exact(&mut n8)?;
        let n = u64::from_le_bytes(n8) as usize;
        if n != graph.len() {
            return Err(Error::LayoutMismatch);
        }
        let mut buf = vec![0u8; n * n * 12];
        r.read_exact(&mut buf)?;
        let (dbytes, nbytes) = buf.split_at(n * n * 8);
        let dist = dbytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let next = nbytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { n, dist, next, layout_hash: hash })
    }

    /// Loads the dump at `path` if it matches, otherwise precomputes and writes it.
    pub fn load_or_compute(path: &std::path::Path, graph: &WarehouseGraph) -> Result<Self> {
        if let Ok(f) = std::fs::File::open(path) {
            if let Ok(cache) = Self::read_from(std::io::BufReader::new(f), graph) {
                return Ok(cache);
            }
        }
        let cache = Self::precompute(graph)?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        cache.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        Ok(cache)
    }
}

fn quantize(p: (f64, f64)) -> (i64, i64) {
    ((p.0 * 1e6).round() as i64, (p.1 * 1e6).round() as i64)
}

/// Exact-match hash table plus a 2-D KD-tree over node positions.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    exact: HashMap<(i64, i64), NodeId>,
    points: Vec<(f64, f64)>,
    ids: Vec<NodeId>,
    /// KD-tree nodes in implicit layout: `tree[lo..hi]` is a subtree whose median
    /// `(lo + hi) / 2` is the splitting point.
    tree: Vec<u32>,
}

impl SpatialIndex {
    pub fn build(graph: &WarehouseGraph) -> Result<Self> {
        let pts: Vec<_> = graph.locations().iter().map(|l| (l.id, l.position)).collect();
        Self::from_points(&pts)
    }

    pub fn from_points(points: &[(NodeId, (f64, f64))]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut exact = HashMap::with_capacity(points.len());
        for &(id, p) in points {
            exact
                .entry(quantize(p))
                .and_modify(|e: &mut NodeId| *e = (*e).min(id))
                .or_insert(id);
        }
        let ids: Vec<NodeId> = points.iter().map(|(id, _)| *id).collect();
        let coords: Vec<(f64, f64)> = points.iter().map(|(_, p)| *p).collect();
        let mut tree: Vec<u32> = (0..points.len() as u32).collect();
        build_kd(&coords, &mut tree, 0);
        Ok(Self { exact, points: coords, ids, tree })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Node nearest to `p`; exact coordinate hits skip the tree. Ties go to the
    /// lowest node id.
    pub fn nearest_node(&self, p: (f64, f64)) -> NodeId {
        if let Some(&id) = self.exact.get(&quantize(p)) {
            return id;
        }
        let mut best = (f64::INFINITY, NodeId(u32::MAX));
        self.search(p, 0, self.tree.len(), 0, &mut best);
        best.1
    }

    fn search(&self, p: (f64, f64), lo: usize, hi: usize, depth: usize, best: &mut (f64, NodeId)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let k = self.tree[mid] as usize;
        let q = self.points[k];
        let d2 = (q.0 - p.0).powi(2) + (q.1 - p.1).powi(2);
        let id = self.ids[k];
        if d2 < best.0 || (d2 == best.0 && id < best.1) {
            *best = (d2, id);
        }
        let diff = if depth.is_multiple_of(2) { p.0 - q.0 } else { p.1 - q.1 };
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(p, near.0, near.1, depth + 1, best);
        // equal-distance candidates may still win the id tie-break
        if diff * diff <= best.0 {
            self.search(p, far.0, far.1, depth + 1, best);
        }
    }
}

fn build_kd(points: &[(f64, f64)], idx: &mut [u32], depth: usize) {
    if idx.len() <= 1 {
        return;
    }
    let mid = idx.len() / 2;
    let key = |i: &u32| {
        let p = points[*i as usize];
        if depth.is_multiple_of(2) { p.0 } else { p.1 }
    };
    idx.select_nth_unstable_by(mid, |a, b| key(a).total_cmp(&key(b)));
    let (left, right) = idx.split_at_mut(mid);
    build_kd(points, left, depth + 1);
    build_kd(points, &mut right[1..], depth + 1);
}
