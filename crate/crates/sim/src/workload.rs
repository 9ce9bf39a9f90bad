//! Synthetic road grids and seeded request traces.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use structride_core::roadnet::{Millis, NodeId, RoadNetwork};
use thiserror::Error;

use crate::io::RequestRow;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload spec: {0}")]
    Invalid(String),
    #[error("no destination within 20% of a {target_s:.0} s trip after {tries} draws")]
    Unrealizable { target_s: f64, tries: u32 },
    #[error("{path}: {msg}")]
    Spec { path: PathBuf, msg: String },
}

/// A Gaussian hotspot of pickup density, centred on a coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hotspot {
    pub lon: f64,
    pub lat: f64,
    pub sigma_m: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSpec {
    pub count: usize,
    pub seed: u64,
    /// Poisson arrival rate, requests per second.
    pub rate_per_s: f64,
    /// Log-normal trip time parameters, in log-seconds.
    pub trip_mu: f64,
    pub trip_sigma: f64,
    /// Riders drawn uniformly from `1..=max_riders`.
    pub max_riders: u32,
    /// Explicit hotspots; when empty, `hotspot_count` are placed on random
    /// nodes with spread `hotspot_sigma_m`.
    pub hotspots: Vec<Hotspot>,
    pub hotspot_count: usize,
    pub hotspot_sigma_m: f64,
    /// Share of uniformly spread pickups.
    pub background: f64,
    /// Weight destinations by the same hotspot mixture as pickups.
    pub hot_destinations: bool,
    /// Network directory, used by the CLI.
    pub network: PathBuf,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            count: 1000,
            seed: 1,
            rate_per_s: 0.2,
            trip_mu: 400f64.ln(),
            trip_sigma: 0.5,
            max_riders: 1,
            hotspots: Vec::new(),
            hotspot_count: 4,
            hotspot_sigma_m: 1500.0,
            background: 0.3,
            hot_destinations: false,
            network: PathBuf::new(),
        }
    }
}

impl WorkloadSpec {
    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let spec_err = |msg: String| WorkloadError::Spec {
            path: path.to_owned(),
            msg,
        };
        let text = std::fs::read_to_string(path).map_err(|e| spec_err(e.to_string()))?;
        let mut spec: Self = toml::from_str(&text).map_err(|e| spec_err(e.to_string()))?;
        if spec.network.is_relative() {
            spec.network = path.parent().unwrap_or(Path::new(".")).join(&spec.network);
        }
        Ok(spec)
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        let ok = self.rate_per_s > 0.0
            && self.trip_sigma > 0.0
            && self.trip_mu.is_finite()
            && self.max_riders >= 1
            && self.background >= 0.0
            && self.hotspot_sigma_m > 0.0
            && self.hotspots.iter().all(|h| h.sigma_m > 0.0 && h.weight >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(WorkloadError::Invalid(
                "rates, sigmas and riders must be positive; weights non-negative".into(),
            ))
        }
    }
}

const MAX_DRAWS: u32 = 200;

/// Seeded request trace: hotspot-weighted pickups, destinations whose
/// shortest trip time is within 20% of a log-normal draw, Poisson releases.
pub fn generate(net: &RoadNetwork, spec: &WorkloadSpec) -> Result<Vec<RequestRow>, WorkloadError> {
    spec.validate()?;
    if spec.count == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = net.node_count();
    let weights = pickup_weights(net, spec, &mut rng);
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().expect("non-empty network");
    let trip = LogNormal::new(spec.trip_mu, spec.trip_sigma).map_err(|e| WorkloadError::Invalid(e.to_string()))?;
    let gaps = Exp::new(spec.rate_per_s).map_err(|e| WorkloadError::Invalid(e.to_string()))?;

    let mut costs: HashMap<NodeId, Vec<Option<Millis>>> = HashMap::new();
    let mut out = Vec::with_capacity(spec.count);
    let mut clock = 0.0;
    for id in 0..spec.count {
        clock += gaps.sample(&mut rng);
        let mut tries = 0;
        let (src, dst) = loop {
            tries += 1;
            let target = trip.sample(&mut rng);
            let u = rng.random::<f64>() * total;
            let src = cumulative.partition_point(|&c| c <= u).min(n - 1) as NodeId;
            let row = costs.entry(src).or_insert_with(|| net.costs_from(src));
            let (lo, hi) = ((0.8 * target * 1000.0) as Millis, (1.2 * target * 1000.0) as Millis);
            let band: Vec<NodeId> = row
                .iter()
                .enumerate()
                .filter(|&(v, c)| v as NodeId != src && c.is_some_and(|c| (lo..=hi).contains(&c)))
                .map(|(v, _)| v as NodeId)
                .collect();
            let pick = if spec.hot_destinations {
                band.choose_weighted(&mut rng, |&v| weights[v as usize]).ok()
            } else {
                band.choose(&mut rng)
            };
            if let Some(&dst) = pick {
                break (src, dst);
            }
            if tries >= MAX_DRAWS {
                return Err(WorkloadError::Unrealizable {
                    target_s: target,
                    tries,
                });
            }
        };
        out.push(RequestRow {
            id: id as u32,
            src_node: src,
            dst_node: dst,
            riders: rng.random_range(1..=spec.max_riders),
            release_s: (clock * 1000.0).round() / 1000.0,
            deadline_s: None,
        });
    }
    Ok(out)
}

fn pickup_weights(net: &RoadNetwork, spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = net.node_count();
    let hotspots: Vec<([f64; 2], f64, f64)> = if spec.hotspots.is_empty() {
        let nodes: Vec<NodeId> = (0..n as NodeId).collect();
        (0..spec.hotspot_count)
            .map(|_| {
                let c = *nodes.choose(rng).expect("non-empty network");
                (net.xy(c), spec.hotspot_sigma_m, 1.0)
            })
            .collect()
    } else {
        let anchor = nearest_node_xy(net);
        spec.hotspots
            .iter()
            .map(|h| (anchor(h.lon, h.lat), h.sigma_m, h.weight))
            .collect()
    };
    let hot_total: f64 = hotspots.iter().map(|h| h.2).sum();
    (0..n as NodeId)
        .map(|v| {
            let p = net.xy(v);
            let hot: f64 = hotspots
                .iter()
                .map(|&(c, s, w)| {
                    let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                    w * (-d2 / (2.0 * s * s)).exp()
                })
                .sum();
            let hot = if hot_total > 0.0 { hot / hot_total } else { 0.0 };
            hot + spec.background
        })
        .map(|w| if w > 0.0 { w } else { f64::MIN_POSITIVE })
        .collect()
}

/// Maps a lon/lat to the planar coordinate of its nearest node.
fn nearest_node_xy(net: &RoadNetwork) -> impl Fn(f64, f64) -> [f64; 2] + '_ {
    move |lon, lat| {
        let best = (0..net.node_count() as NodeId)
            .min_by(|&a, &b| {
                let da = dist2(net.lon_lat(a), (lon, lat));
                let db = dist2(net.lon_lat(b), (lon, lat));
                da.total_cmp(&db)
            })
            .expect("non-empty network");
        net.xy(best)
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Parameters of a synthetic square street grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub side: usize,
    pub spacing_m: f64,
    pub min_speed_mps: f64,
    pub max_speed_mps: f64,
    pub origin_lon: f64,
    pub origin_lat: f64,
    /// Positional noise as a fraction of the spacing.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            side: 32,
            spacing_m: 300.0,
            min_speed_mps: 8.0,
            max_speed_mps: 14.0,
            origin_lon: 104.02,
            origin_lat: 30.62,
            jitter: 0.15,
            seed: 1,
        }
    }
}

const METRES_PER_DEG_LAT: f64 = 111_320.0;

/// A street grid with two-way streets. Each street segment gets one speed
/// drawn uniformly, shared by both directions. Coordinates are rounded to
/// 1e-6 degrees and travel times to whole milliseconds, so writing and
/// reloading the network reproduces it exactly.
pub fn synthetic_grid(spec: &GridSpec) -> RoadNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let side = spec.side.max(2);
    let noise = Normal::new(0.0, spec.jitter.max(0.0) * spec.spacing_m).expect("finite jitter");
    let m_per_lon = METRES_PER_DEG_LAT * spec.origin_lat.to_radians().cos();
    let round6 = |x: f64| (x * 1e6).round() / 1e6;
    let coords: Vec<(f64, f64)> = (0..side * side)
        .map(|i| {
            let (col, row) = ((i % side) as f64, (i / side) as f64);
            let x = col * spec.spacing_m + noise.sample(&mut rng);
            let y = row * spec.spacing_m + noise.sample(&mut rng);
            (
                round6(spec.origin_lon + x / m_per_lon),
                round6(spec.origin_lat + y / METRES_PER_DEG_LAT),
            )
        })
        .collect();
    let probe = RoadNetwork::from_parts(coords.clone(), &[]).expect("valid coordinates");
    let mut edges = Vec::new();
    for i in 0..side * side {
        let (col, row) = (i % side, i / side);
        let mut link = |j: usize| {
            let metres = probe.euclidean_m(i as NodeId, j as NodeId);
            let speed = rng.random_range(spec.min_speed_mps..=spec.max_speed_mps);
            let ms = ((metres / speed) * 1000.0).round().max(1.0) as Millis;
            edges.push((i as NodeId, j as NodeId, ms));
            edges.push((j as NodeId, i as NodeId, ms));
        };
        if col + 1 < side {
            link(i + 1);
        }
        if row + 1 < side {
            link(i + side);
        }
    }
    RoadNetwork::from_parts(coords, &edges).expect("grid is well formed")
}
