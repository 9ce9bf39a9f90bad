//! Directed road network with exact shortest-travel-time queries.
//!
//! Travel times are stored as integer milliseconds. Node coordinates are kept
//! in degrees and in a local planar projection (metres), which the grid index
//! and the angle filter use; they never influence travel costs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::hash::BuildHasherDefault;
use std::io::Read;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use lru::LruCache;
use rustc_hash::FxHasher;
use thiserror::Error;

/// Dense node index `0..N`.
pub type NodeId = u32;

/// Time in integer milliseconds.
pub type Millis = i64;

pub const DEFAULT_CACHE_CAPACITY: usize = 1_000_000;

const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{table} line {line}: {msg}")]
    Malformed {
        table: &'static str,
        line: u64,
        msg: String,
    },
    #[error("edges line {line}: endpoint {node} does not exist ({nodes} nodes)")]
    DanglingEndpoint { line: u64, node: u64, nodes: usize },
    #[error("edges line {line}: negative travel time {value}")]
    NegativeWeight { line: u64, value: f64 },
    #[error("node table is empty")]
    Empty,
    #[error("node ids must be dense 0..{expected}; missing id {missing}")]
    SparseIds { expected: usize, missing: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Immutable directed graph in compressed adjacency form.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    lon: Vec<f64>,
    lat: Vec<f64>,
    xy: Vec<[f64; 2]>,
    offsets: Vec<usize>,
    heads: Vec<NodeId>,
    weights: Vec<Millis>,
}

impl RoadNetwork {
    /// Builds a network from `(lon, lat)` per node and `(from, to, ms)` edges.
    pub fn from_parts(coords: Vec<(f64, f64)>, edges: &[(NodeId, NodeId, Millis)]) -> Result<Self, NetworkError> {
        if coords.is_empty() {
            return Err(NetworkError::Empty);
        }
        let n = coords.len();
        for (i, &(u, v, w)) in edges.iter().enumerate() {
            let line = i as u64 + 1;
            for node in [u, v] {
                if node as usize >= n {
                    return Err(NetworkError::DanglingEndpoint {
                        line,
                        node: node.into(),
                        nodes: n,
                    });
                }
            }
            if w < 0 {
                return Err(NetworkError::NegativeWeight {
                    line,
                    value: w as f64 / 1000.0,
                });
            }
        }

        let mut offsets = vec![0usize; n + 1];
        for &(u, _, _) in edges {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut heads = vec![0; edges.len()];
        let mut weights = vec![0; edges.len()];
        for &(u, v, w) in edges {
            let slot = &mut fill[u as usize];
            heads[*slot] = v;
            weights[*slot] = w;
            *slot += 1;
        }

        let (lon, lat): (Vec<f64>, Vec<f64>) = coords.into_iter().unzip();
        let xy = project(&lon, &lat);
        Ok(Self {
            lon,
            lat,
            xy,
            offsets,
            heads,
            weights,
        })
    }

    /// Loads `node_id,lon,lat` and `from,to,travel_time_s` CSV tables.
    pub fn load<N: Read, E: Read>(nodes: N, edges: E) -> Result<Self, NetworkError> {
        let mut node_rows: Vec<Option<(f64, f64)>> = Vec::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(nodes);
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |msg: String| NetworkError::Malformed {
                table: "nodes",
                line,
                msg,
            };
            if rec.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", rec.len())));
            }
            let id: usize = rec[0].parse().map_err(|_| bad(format!("bad node id {:?}", &rec[0])))?;
            let lon: f64 = parse_finite(&rec[1]).ok_or_else(|| bad(format!("bad lon {:?}", &rec[1])))?;
            let lat: f64 = parse_finite(&rec[2]).ok_or_else(|| bad(format!("bad lat {:?}", &rec[2])))?;
            if id >= node_rows.len() {
                node_rows.resize(id + 1, None);
            }
            if node_rows[id].replace((lon, lat)).is_some() {
                return Err(bad(format!("duplicate node id {id}")));
            }
        }
        if node_rows.is_empty() {
            return Err(NetworkError::Empty);
        }
        let expected = node_rows.len();
        let coords = node_rows
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or(NetworkError::SparseIds { expected, missing: i }))
            .collect::<Result<Vec<_>, _>>()?;

        let mut edge_rows = Vec::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(edges);
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |msg: String| NetworkError::Malformed {
                table: "edges",
                line,
                msg,
            };
            if rec.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", rec.len())));
            }
            let from: u64 = rec[0].parse().map_err(|_| bad(format!("bad from {:?}", &rec[0])))?;
            let to: u64 = rec[1].parse().map_err(|_| bad(format!("bad to {:?}", &rec[1])))?;
            let secs = parse_finite(&rec[2]).ok_or_else(|| bad(format!("bad travel time {:?}", &rec[2])))?;
            for node in [from, to] {
                if node >= expected as u64 {
                    return Err(NetworkError::DanglingEndpoint {
                        line,
                        node,
                        nodes: expected,
                    });
                }
            }
            if secs < 0.0 {
                return Err(NetworkError::NegativeWeight { line, value: secs });
            }
            edge_rows.push((from as NodeId, to as NodeId, secs_to_ms(secs)));
        }
        Self::from_parts(coords, &edge_rows)
    }

    pub fn node_count(&self) -> usize {
        self.lon.len()
    }

    pub fn edge_count(&self) -> usize {
        self.heads.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        (node as usize) < self.node_count()
    }

    pub fn lon_lat(&self, node: NodeId) -> (f64, f64) {
        (self.lon[node as usize], self.lat[node as usize])
    }

    /// Planar position in metres (equirectangular about the node centroid).
    pub fn xy(&self, node: NodeId) -> [f64; 2] {
        self.xy[node as usize]
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        let u = node as usize;
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn out_edges(&self, node: NodeId) -> impl Iterator<Item = (NodeId, Millis)> + '_ {
        let u = node as usize;
        let range = self.offsets[u]..self.offsets[u + 1];
        self.heads[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, Millis)> + '_ {
        (0..self.node_count() as NodeId).flat_map(move |u| self.out_edges(u).map(move |(v, w)| (u, v, w)))
    }

    pub fn euclidean_m(&self, a: NodeId, b: NodeId) -> f64 {
        let (p, q) = (self.xy(a), self.xy(b));
        (p[0] - q[0]).hypot(p[1] - q[1])
    }

    /// Exact single-pair travel time; `None` when `v` is unreachable from `u`.
    pub fn shortest_travel_cost(&self, u: NodeId, v: NodeId) -> Option<Millis> {
        self.search(u, Some(v), |_, _| {})
    }

    /// Travel times from `u` to every node.
    pub fn costs_from(&self, u: NodeId) -> Vec<Option<Millis>> {
        let mut out = vec![None; self.node_count()];
        self.search(u, None, |node, d| out[node as usize] = Some(d));
        out
    }

    /// Node sequence of one shortest path with cumulative travel times.
    pub fn shortest_path(&self, u: NodeId, v: NodeId) -> Option<Vec<(NodeId, Millis)>> {
        let n = self.node_count();
        let mut dist = vec![Millis::MAX; n];
        let mut parent = vec![NodeId::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[u as usize] = 0;
        heap.push(Reverse((0, u)));
        while let Some(Reverse((d, x))) = heap.pop() {
            if d > dist[x as usize] {
                continue;
            }
            if x == v {
                break;
            }
            for (y, w) in self.out_edges(x) {
                let nd = d + w;
                if nd < dist[y as usize] {
                    dist[y as usize] = nd;
                    parent[y as usize] = x;
                    heap.push(Reverse((nd, y)));
                }
            }
        }
        if dist[v as usize] == Millis::MAX {
            return None;
        }
        let mut path = vec![(v, dist[v as usize])];
        let mut x = v;
        while x != u {
            x = parent[x as usize];
            path.push((x, dist[x as usize]));
        }
        path.reverse();
        Some(path)
    }

    /// Dijkstra from `u`, reporting every settled node. Stops once `target`
    /// is settled and returns its distance.
    fn search(&self, u: NodeId, target: Option<NodeId>, mut settled: impl FnMut(NodeId, Millis)) -> Option<Millis> {
        let n = self.node_count();
        let mut dist = vec![Millis::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[u as usize] = 0;
        heap.push(Reverse((0, u)));
        while let Some(Reverse((d, x))) = heap.pop() {
            if done[x as usize] {
                continue;
            }
            done[x as usize] = true;
            settled(x, d);
            if Some(x) == target {
                return Some(d);
            }
            for (y, w) in self.out_edges(x) {
                let nd = d + w;
                if nd < dist[y as usize] {
                    dist[y as usize] = nd;
                    heap.push(Reverse((nd, y)));
                }
            }
        }
        None
    }

    /// Speed (m/s) at the given percentile of per-edge straight-line speeds.
    pub fn speed_percentile(&self, pct: f64) -> f64 {
        let mut speeds: Vec<f64> = self
            .edges()
            .filter(|&(u, v, w)| w > 0 && u != v)
            .map(|(u, v, w)| self.euclidean_m(u, v) / (w as f64 / 1000.0))
            .filter(|s| *s > 0.0)
            .collect();
        if speeds.is_empty() {
            return 1.0;
        }
        speeds.sort_by(f64::total_cmp);
        let rank = ((pct / 100.0) * (speeds.len() - 1) as f64).round() as usize;
        speeds[rank.min(speeds.len() - 1)]
    }
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn secs_to_ms(secs: f64) -> Millis {
    (secs * 1000.0).round() as Millis
}

fn project(lon: &[f64], lat: &[f64]) -> Vec<[f64; 2]> {
    let n = lon.len() as f64;
    let lon0 = lon.iter().sum::<f64>() / n;
    let lat0 = lat.iter().sum::<f64>() / n;
    let kx = EARTH_RADIUS_M * lat0.to_radians().cos() * std::f64::consts::PI / 180.0;
    let ky = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    lon.iter()
        .zip(lat)
        .map(|(&x, &y)| [(x - lon0) * kx, (y - lat0) * ky])
        .collect()
}

type PairCache = LruCache<(NodeId, NodeId), Option<Millis>, BuildHasherDefault<FxHasher>>;

/// Cost oracle over a network with a bounded LRU cache of pair results.
///
/// A miss runs Dijkstra from the source until the target settles and caches
/// every settled pair on the way. Cached and uncached answers are identical.
pub struct Router<'n> {
    net: &'n RoadNetwork,
    cache: Option<Mutex<PairCache>>,
    queries: AtomicU64,
    searches: AtomicU64,
}

impl<'n> Router<'n> {
    pub fn new(net: &'n RoadNetwork, cache_capacity: usize) -> Self {
        let cache =
            NonZeroUsize::new(cache_capacity).map(|cap| Mutex::new(LruCache::with_hasher(cap, Default::default())));
        Self {
            net,
            cache,
            queries: AtomicU64::new(0),
            searches: AtomicU64::new(0),
        }
    }

    pub fn uncached(net: &'n RoadNetwork) -> Self {
        Self::new(net, 0)
    }

    pub fn network(&self) -> &'n RoadNetwork {
        self.net
    }

    pub fn cost(&self, u: NodeId, v: NodeId) -> Option<Millis> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        if u == v {
            return Some(0);
        }
        let Some(cache) = &self.cache else {
            self.searches.fetch_add(1, Ordering::Relaxed);
            return self.net.shortest_travel_cost(u, v);
        };
        if let Some(hit) = cache.lock().expect("cost cache poisoned").get(&(u, v)) {
            return *hit;
        }
        self.searches.fetch_add(1, Ordering::Relaxed);
        let mut settled = Vec::new();
        let found = self.net.search(u, Some(v), |x, d| settled.push((x, d)));
        let mut cache = cache.lock().expect("cost cache poisoned");
        for (x, d) in settled {
            cache.put((u, x), Some(d));
        }
        if found.is_none() {
            cache.put((u, v), None);
        }
        found
    }

    /// Number of `cost` calls so far (hits and misses).
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    /// Number of graph searches actually run.
    pub fn search_count(&self) -> u64 {
        self.searches.load(Ordering::Relaxed)
    }
}
