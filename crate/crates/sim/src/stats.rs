//! Shareability diagnostics over fixed time windows of a request trace.

use std::collections::BTreeMap;

use serde::Serialize;
use structride_core::insertion::Planner;
use structride_core::model::{Request, RequestId};
use structride_core::roadnet::{Millis, Router};
use structride_core::shareability::{
    brute_force_graph, capped_partition_upper, clique_partition_upper, hill_exponent, GraphBuilder, LogNormalFit,
    ShareError, ShareabilityGraph,
};

#[derive(Debug, Clone, Copy)]
pub struct StatsParams {
    pub window_ms: Millis,
    pub capacity: u32,
    pub angle: f64,
    pub grid_n: usize,
    pub gamma: f64,
}

#[derive(Debug, Serialize)]
pub struct WindowStats {
    pub window: u64,
    pub t_start_s: f64,
    pub requests: usize,
    pub edges_all_pairs: usize,
    pub edges_pruned: usize,
    pub recall: f64,
    pub hill_eta: Option<f64>,
    pub theta_upper: u64,
    pub theta_upper_capped: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct GraphReport {
    pub windows: Vec<WindowStats>,
    pub edges_all_pairs: usize,
    pub edges_pruned: usize,
    pub recall: f64,
    pub trip_fit: Option<TripFit>,
}

#[derive(Debug, Serialize)]
pub struct TripFit {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    /// Expected probability that a pair lies in a guaranteed-shareable
    /// length band at the configured angle.
    pub sharing_probability: f64,
}

/// Builds, per window, the graph of requests released in it with and
/// without candidate pruning.
pub fn graph_stats(router: &Router<'_>, requests: &[Request], p: StatsParams) -> Result<GraphReport, ShareError> {
    let planner = Planner::new(router, true);
    let speed = router.network().speed_percentile(99.0).max(f64::MIN_POSITIVE);
    let mut windows: BTreeMap<u64, Vec<&Request>> = BTreeMap::new();
    for r in requests {
        windows
            .entry((r.release / p.window_ms.max(1)) as u64)
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    let (mut all_total, mut kept_total) = (0, 0);
    for (w, reqs) in windows {
        let full = brute_force_graph(&planner, &reqs, p.capacity);
        let live: BTreeMap<RequestId, Request> = reqs.iter().map(|r| (r.id, (*r).clone())).collect();
        let ids: Vec<RequestId> = live.keys().copied().collect();
        let mut pruned = ShareabilityGraph::new();
        GraphBuilder::new(planner, p.capacity, p.angle, speed, p.grid_n).add_batch(&mut pruned, &live, &ids);
        let n = full.node_count() as u64;
        let e = full.edge_count() as u64;
        let eta = hill_exponent(&full.degrees());
        all_total += full.edge_count();
        kept_total += pruned.edge_count();
        out.push(WindowStats {
            window: w,
            t_start_s: (w as Millis * p.window_ms) as f64 / 1000.0,
            requests: reqs.len(),
            edges_all_pairs: full.edge_count(),
            edges_pruned: pruned.edge_count(),
            recall: ratio(pruned.edge_count(), full.edge_count()),
            hill_eta: eta,
            theta_upper: clique_partition_upper(n, e),
            theta_upper_capped: eta.map(|eta| capped_partition_upper(n, e, eta, p.capacity)),
        });
    }
    let trips: Vec<f64> = requests.iter().map(|r| r.trip_cost as f64 / 1000.0).collect();
    let trip_fit = match LogNormalFit::fit(&trips, p.gamma) {
        Ok(fit) => {
            let angle = p.angle.min(std::f64::consts::PI);
            Some(TripFit {
                mu: fit.mu,
                sigma: fit.sigma,
                gamma: fit.gamma,
                sharing_probability: fit.expected_sharing_probability(angle)?,
            })
        }
        Err(_) => None,
    };
    Ok(GraphReport {
        windows: out,
        edges_all_pairs: all_total,
        edges_pruned: kept_total,
        recall: ratio(kept_total, all_total),
        trip_fit,
    })
}

fn ratio(kept: usize, all: usize) -> f64 {
    if all == 0 {
        1.0
    } else {
        kept as f64 / all as f64
    }
}
