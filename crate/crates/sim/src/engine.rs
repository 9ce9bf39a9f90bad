//! The batch clock: release, dispatch, move, expire.

use std::collections::{BTreeSet, VecDeque};
use std::time::Instant;

use serde::Serialize;
use structride_core::dispatch::{Algorithm, BatchOutcome, DispatchConfig, DispatchState, RoundTrace};
use structride_core::insertion::Planner;
use structride_core::model::{Request, RequestId, Vehicle, VehicleEvent, VehicleId};
use structride_core::roadnet::{Millis, RoadNetwork, Router};
use structride_core::shareability::{brute_force_graph, clique_partition_upper, GraphStats};

use crate::config::SimConfig;

/// Percentile of edge speeds used as the straight-line speed bound.
pub const SPEED_PERCENTILE: f64 = 99.0;

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchMetrics {
    pub batch_idx: u64,
    pub t_start: f64,
    pub served: usize,
    pub expired: usize,
    /// Cumulative unified cost in seconds.
    pub unified_cost: f64,
    pub wall_ms: f64,
}

/// Everything that happened in one batch.
#[derive(Debug, Clone)]
pub struct BatchRecord {
    pub index: u64,
    pub start: Millis,
    pub now: Millis,
    pub released: Vec<RequestId>,
    pub events: Vec<(VehicleId, VehicleEvent)>,
    pub outcome: BatchOutcome,
    pub expired: Vec<RequestId>,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    /// Edges of the all-pairs graph over the pool, when recall is tracked.
    pub oracle_edges: Option<usize>,
    pub metrics: BatchMetrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub requests: usize,
    pub served: usize,
    pub expired: usize,
    pub service_rate: f64,
    pub unified_cost_s: f64,
    pub driven_s: f64,
    pub unserved_trip_s: f64,
    pub batches: u64,
    pub rounds: u64,
    pub proposals: u64,
    pub path_queries: u64,
    pub graph: GraphStats,
    /// Mean over batches of the clique partition bound of the pool graph.
    pub theta_upper_mean: f64,
    pub edge_recall: Option<f64>,
}

/// A running simulation that can be stepped batch by batch.
pub struct Simulation<'a, 'n> {
    state: DispatchState<'a, 'n>,
    pending: VecDeque<Request>,
    total: usize,
    batch_ms: Millis,
    alpha: f64,
    penalty: f64,
    edge_recall: bool,
    index: u64,
    summary: Summary,
    theta_sum: f64,
    recall_kept: u64,
    recall_all: u64,
}

impl<'a, 'n> Simulation<'a, 'n> {
    /// `vehicles` must be indexed by id; `requests` in any order.
    pub fn new(router: &'a Router<'n>, cfg: &SimConfig, mut requests: Vec<Request>, vehicles: Vec<Vehicle>) -> Self {
        requests.sort_by_key(|r| (r.release, r.id));
        let planner = Planner::new(router, cfg.include_deadhead);
        let speed = router
            .network()
            .speed_percentile(SPEED_PERCENTILE)
            .max(f64::MIN_POSITIVE);
        let dcfg = DispatchConfig {
            algorithm: cfg.algorithm,
            capacity: cfg.capacity,
            angle: cfg.angle,
            grid_n: cfg.grid_n,
            speed_mps: speed,
            parallel: cfg.parallel,
            trace: cfg.paths.trace,
        };
        let total = requests.len();
        Self {
            state: DispatchState::new(planner, dcfg, vehicles),
            pending: requests.into(),
            total,
            batch_ms: (cfg.batch_s * 1000.0).round().max(1.0) as Millis,
            alpha: cfg.alpha,
            penalty: cfg.penalty,
            edge_recall: cfg.edge_recall && cfg.algorithm == Algorithm::Sard,
            index: 0,
            summary: Summary {
                requests: total,
                ..Summary::default()
            },
            theta_sum: 0.0,
            recall_kept: 0,
            recall_all: 0,
        }
    }

    pub fn state(&self) -> &DispatchState<'a, 'n> {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.pending.is_empty() && self.state.is_drained()
    }

    /// Runs the next batch; `None` once every request is resolved and the
    /// fleet is idle.
    pub fn step(&mut self) -> Option<BatchRecord> {
        self.step_with(|_| {})
    }

    /// Like [`Simulation::step`], calling `before_dispatch` once the batch's
    /// requests are pooled and vehicles have moved.
    pub fn step_with(&mut self, before_dispatch: impl FnOnce(&DispatchState<'a, 'n>)) -> Option<BatchRecord> {
        if self.is_done() {
            return None;
        }
        let wall = Instant::now();
        let start = self.index as Millis * self.batch_ms;
        let now = start + self.batch_ms;
        let router = self.state.planner().router();
        let queries_before = router.query_count();

        let events = self.state.advance(now);
        let mut released = Vec::new();
        while self.pending.front().is_some_and(|r| r.release < now) {
            released.push(self.pending.pop_front().expect("checked front"));
        }
        let released_ids: Vec<RequestId> = released.iter().map(|r| r.id).collect();
        let graph_stats = self.state.add_requests(released);
        let mut expired = self.state.expire_before(now);

        let graph = self.state.graph();
        let (graph_nodes, graph_edges) = (graph.node_count(), graph.edge_count());
        let oracle_edges = self.edge_recall.then(|| {
            let pool: Vec<&Request> = self.state.pool().values().collect();
            brute_force_graph(self.state.planner(), &pool, self.state.config().capacity).edge_count()
        });
        if let Some(all) = oracle_edges {
            self.recall_all += all as u64;
            self.recall_kept += graph_edges as u64;
        }
        if self.state.config().algorithm == Algorithm::Sard && graph_nodes > 0 {
            self.theta_sum += clique_partition_upper(graph_nodes as u64, graph_edges as u64) as f64;
        }

        before_dispatch(&self.state);
        let mut outcome = self.state.dispatch(now);
        outcome.graph = graph_stats;
        expired.extend(self.state.expire_before(now + self.batch_ms));

        let served: usize = outcome.assignments.iter().map(|a| a.requests.len()).sum();
        let s = &mut self.summary;
        s.batches += 1;
        s.served += served;
        s.expired += expired.len();
        s.rounds += outcome.rounds as u64;
        s.proposals += outcome.proposals;
        s.graph += graph_stats;
        s.path_queries += self.state.planner().router().query_count() - queries_before;

        let metrics = BatchMetrics {
            batch_idx: self.index,
            t_start: start as f64 / 1000.0,
            served,
            expired: expired.len(),
            unified_cost: self.state.unified_cost(self.alpha, self.penalty) / 1000.0,
            wall_ms: wall.elapsed().as_secs_f64() * 1000.0,
        };
        self.index += 1;
        Some(BatchRecord {
            index: self.index - 1,
            start,
            now,
            released: released_ids,
            events,
            outcome,
            expired,
            graph_nodes,
            graph_edges,
            oracle_edges,
            metrics,
        })
    }

    /// Final figures; call after the last step.
    pub fn summary(&self) -> Summary {
        let mut s = self.summary.clone();
        s.service_rate = if self.total == 0 {
            1.0
        } else {
            s.served as f64 / self.total as f64
        };
        s.driven_s = self.state.driven_ms() as f64 / 1000.0;
        s.unserved_trip_s = self.state.unserved_trip_ms() as f64 / 1000.0;
        s.unified_cost_s = self.state.unified_cost(self.alpha, self.penalty) / 1000.0;
        if s.batches > 0 {
            s.theta_upper_mean = self.theta_sum / s.batches as f64;
        }
        s.edge_recall = self.edge_recall.then(|| {
            if self.recall_all == 0 {
                1.0
            } else {
                self.recall_kept as f64 / self.recall_all as f64
            }
        });
        s
    }
}

/// Trace line written per proposal round.
#[derive(Debug, Serialize)]
pub struct TraceLine<'t> {
    pub batch: u64,
    #[serde(flatten)]
    pub round: &'t RoundTrace,
}

/// Everything produced by a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub metrics: Vec<BatchMetrics>,
    pub trace: Vec<String>,
    pub served_ids: BTreeSet<RequestId>,
}

/// Runs to completion.
pub fn simulate(router: &Router<'_>, cfg: &SimConfig, requests: Vec<Request>, vehicles: Vec<Vehicle>) -> RunOutput {
    let mut sim = Simulation::new(router, cfg, requests, vehicles);
    let mut metrics = Vec::new();
    let mut trace = Vec::new();
    let mut served_ids = BTreeSet::new();
    while let Some(rec) = sim.step() {
        for a in &rec.outcome.assignments {
            served_ids.extend(a.requests.iter().copied());
        }
        for round in &rec.outcome.trace {
            let line = TraceLine {
                batch: rec.index,
                round,
            };
            trace.push(serde_json::to_string(&line).expect("trace serializes"));
        }
        metrics.push(rec.metrics);
    }
    RunOutput {
        summary: sim.summary(),
        metrics,
        trace,
        served_ids,
    }
}

/// Places `count` vehicles on seeded uniformly random nodes.
pub fn random_fleet(net: &RoadNetwork, count: u32, capacity: u32, seed: u64) -> Vec<Vehicle> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1ee7);
    (0..count)
        .map(|i| {
            let node = rng.random_range(0..net.node_count()) as u32;
            Vehicle::new(VehicleId(i), node, capacity, 0)
        })
        .collect()
}
