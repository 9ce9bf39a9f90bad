//! Batch dispatch: the proposal/acceptance matcher over the shareability
//! graph, an online greedy baseline, expiry and cost accounting.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::grouping::{build_groups, Group};
use crate::insertion::Planner;
use crate::model::{
    check_feasible, Request, RequestId, RouteStart, Schedule, Vehicle, VehicleEvent, VehicleId, Violation,
};
use crate::roadnet::Millis;
use crate::shareability::{shareability_loss, GraphBuilder, GraphStats, ShareabilityGraph};
use crate::spatial::GridIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sard,
    Prunegdp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchConfig {
    pub algorithm: Algorithm,
    /// Capacity of the probe vehicle used for pairwise shareability.
    pub capacity: u32,
    /// Angle threshold in radians; `2π` disables angle pruning.
    pub angle: f64,
    pub grid_n: usize,
    /// Straight-line speed used to turn time budgets into search radii.
    pub speed_mps: f64,
    /// Evaluate vehicles of one acceptance round on the rayon pool.
    pub parallel: bool,
    /// Record per-round proposal traces.
    pub trace: bool,
}

/// One committed group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Assignment {
    pub vehicle: VehicleId,
    pub requests: Vec<RequestId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VehicleChoice {
    pub vehicle: VehicleId,
    pub pool: Vec<RequestId>,
    pub group: Vec<RequestId>,
    pub loss: usize,
    /// Smallest loss over every group the vehicle enumerated in the chosen
    /// size tier.
    pub tier_min_loss: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundTrace {
    pub round: u32,
    pub proposals: Vec<(RequestId, VehicleId)>,
    pub choices: Vec<VehicleChoice>,
    pub rejected: Vec<RequestId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BatchOutcome {
    pub assignments: Vec<Assignment>,
    pub rounds: u32,
    pub proposals: u64,
    pub graph: GraphStats,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<RoundTrace>,
}

/// Everything a batch dispatcher mutates.
pub struct DispatchState<'a, 'n> {
    planner: Planner<'a, 'n>,
    cfg: DispatchConfig,
    vehicles: Vec<Vehicle>,
    vehicle_grid: GridIndex<VehicleId>,
    pool: BTreeMap<RequestId, Request>,
    graph: ShareabilityGraph,
    builder: GraphBuilder<'a, 'n>,
    assigned: BTreeMap<RequestId, VehicleId>,
    expired: BTreeSet<RequestId>,
    penalty_trip_ms: Millis,
    driven_ms: Millis,
}

impl<'a, 'n> DispatchState<'a, 'n> {
    /// `vehicles` must be indexed by id (`vehicles[i].id == VehicleId(i)`).
    pub fn new(planner: Planner<'a, 'n>, cfg: DispatchConfig, vehicles: Vec<Vehicle>) -> Self {
        let net = planner.router().network();
        let mut vehicle_grid = GridIndex::build(net, cfg.grid_n);
        for (i, v) in vehicles.iter().enumerate() {
            assert_eq!(v.id, VehicleId(i as u32), "vehicles must be indexed by id");
            vehicle_grid
                .update_member(v.id, v.position.node)
                .expect("vehicle on a network node");
        }
        let builder = GraphBuilder::new(planner, cfg.capacity, cfg.angle, cfg.speed_mps, cfg.grid_n);
        Self {
            planner,
            cfg,
            vehicles,
            vehicle_grid,
            pool: BTreeMap::new(),
            graph: ShareabilityGraph::new(),
            builder,
            assigned: BTreeMap::new(),
            expired: BTreeSet::new(),
            penalty_trip_ms: 0,
            driven_ms: 0,
        }
    }

    pub fn config(&self) -> &DispatchConfig {
        &self.cfg
    }

    pub fn planner(&self) -> &Planner<'a, 'n> {
        &self.planner
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn pool(&self) -> &BTreeMap<RequestId, Request> {
        &self.pool
    }

    pub fn graph(&self) -> &ShareabilityGraph {
        &self.graph
    }

    pub fn assigned(&self) -> &BTreeMap<RequestId, VehicleId> {
        &self.assigned
    }

    pub fn expired(&self) -> &BTreeSet<RequestId> {
        &self.expired
    }

    /// Total time driven so far, including committed legs in progress.
    pub fn driven_ms(&self) -> Millis {
        self.driven_ms
    }

    /// Trip cost summed over expired requests.
    pub fn unserved_trip_ms(&self) -> Millis {
        self.penalty_trip_ms
    }

    /// `alpha * driven + penalty * unserved trip cost`, in milliseconds.
    pub fn unified_cost(&self, alpha: f64, penalty: f64) -> f64 {
        unified_cost(alpha, penalty, self.driven_ms, self.penalty_trip_ms)
    }

    pub fn is_drained(&self) -> bool {
        self.pool.is_empty() && self.vehicles.iter().all(Vehicle::is_idle)
    }

    /// Adds released requests to the pool and, for the graph-based matcher,
    /// to the shareability graph.
    pub fn add_requests(&mut self, requests: impl IntoIterator<Item = Request>) -> GraphStats {
        let mut ids = Vec::new();
        for r in requests {
            ids.push(r.id);
            self.pool.insert(r.id, r);
        }
        match self.cfg.algorithm {
            Algorithm::Sard => self.builder.add_batch(&mut self.graph, &self.pool, &ids),
            Algorithm::Prunegdp => GraphStats::default(),
        }
    }

    /// Moves every vehicle along its schedule to time `t`.
    pub fn advance(&mut self, t: Millis) -> Vec<(VehicleId, VehicleEvent)> {
        let net = self.planner.router().network();
        let mut out = Vec::new();
        for v in &mut self.vehicles {
            for ev in v.advance_to(t, net) {
                if let VehicleEvent::Drive { depart, arrive, .. } = ev {
                    self.driven_ms += arrive - depart;
                }
                out.push((v.id, ev));
            }
            self.vehicle_grid
                .update_member(v.id, v.position.node)
                .expect("vehicle on a network node");
        }
        out
    }

    /// Drops pool requests whose waiting window closes before `cutoff`.
    pub fn expire_before(&mut self, cutoff: Millis) -> Vec<RequestId> {
        let gone: Vec<RequestId> = self
            .pool
            .values()
            .filter(|r| r.expires_at() < cutoff)
            .map(|r| r.id)
            .collect();
        for id in &gone {
            let r = self.pool.remove(id).expect("listed from pool");
            self.penalty_trip_ms += r.trip_cost;
            self.builder.remove(&mut self.graph, *id);
            self.expired.insert(*id);
        }
        gone
    }

    /// Runs the configured dispatcher at time `now`.
    pub fn dispatch(&mut self, now: Millis) -> BatchOutcome {
        match self.cfg.algorithm {
            Algorithm::Sard => self.sard_batch(now),
            Algorithm::Prunegdp => self.prunegdp_batch(now),
        }
    }

    fn start_of(&self, v: VehicleId, now: Millis) -> RouteStart {
        let mut s = self.vehicles[v.0 as usize].start();
        s.position.time = s.position.time.max(now);
        s
    }

    /// Vehicles that can insert `req` into their current schedule, ordered
    /// worst first: largest cost increase, ties to the lower vehicle id.
    pub fn candidate_queue(&self, req: &Request, now: Millis) -> Vec<(VehicleId, Millis)> {
        let radius_s = (req.max_wait + (req.deadline - req.release)) as f64 / 1000.0;
        let mut queue: Vec<(VehicleId, Millis)> = self.nearby_feasible(req, now, radius_s).into_iter().collect();
        queue.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        queue
    }

    fn nearby_feasible(&self, req: &Request, now: Millis, radius_s: f64) -> Vec<(VehicleId, Millis)> {
        let router = self.planner.router();
        self.vehicle_grid
            .range_query(req.source, radius_s, self.cfg.speed_mps)
            .into_iter()
            .filter_map(|v| {
                let start = self.start_of(v, now);
                let reach = router.cost(start.position.node, req.source)?;
                if start.position.time + reach > req.pickup_deadline() {
                    return None;
                }
                let vehicle = &self.vehicles[v.0 as usize];
                let ins = self.planner.insert_request(&start, &vehicle.schedule, req)?;
                Some((v, ins.delta))
            })
            .collect()
    }

    /// One batch of proposal and acceptance rounds.
    ///
    /// Every pooled request proposes to its worst remaining candidate; each
    /// vehicle then keeps the group of its proposers (plus what it already
    /// holds this batch) with the smallest shareability loss and releases
    /// the rest. Rounds repeat until nobody proposes. Accepted groups are
    /// committed when the batch ends.
    pub fn sard_batch(&mut self, now: Millis) -> BatchOutcome {
        let mut out = BatchOutcome::default();
        let mut queues: BTreeMap<RequestId, VecDeque<VehicleId>> = self
            .pool
            .values()
            .map(|r| (r.id, self.candidate_queue(r, now).into_iter().map(|(v, _)| v).collect()))
            .collect();
        let mut unmatched: BTreeSet<RequestId> = self.pool.keys().copied().collect();
        let mut held: BTreeMap<VehicleId, Group> = BTreeMap::new();

        loop {
            let mut proposals: BTreeMap<VehicleId, Vec<RequestId>> = BTreeMap::new();
            for &r in &unmatched {
                if let Some(v) = queues.get_mut(&r).and_then(VecDeque::pop_front) {
                    proposals.entry(v).or_default().push(r);
                }
            }
            if proposals.is_empty() {
                break;
            }
            out.rounds += 1;
            let mut trace = self.cfg.trace.then(|| RoundTrace {
                round: out.rounds,
                proposals: proposals
                    .iter()
                    .flat_map(|(&v, rs)| rs.iter().map(move |&r| (r, v)))
                    .collect(),
                choices: Vec::new(),
                rejected: Vec::new(),
            });
            for rs in proposals.values() {
                out.proposals += rs.len() as u64;
                for r in rs {
                    unmatched.remove(r);
                }
            }

            let jobs: Vec<(VehicleId, Vec<RequestId>)> = proposals
                .into_iter()
                .map(|(v, new)| {
                    let mut pool: Vec<RequestId> = held.get(&v).map(|g| g.members.clone()).unwrap_or_default();
                    pool.extend(new);
                    pool.sort_unstable();
                    (v, pool)
                })
                .collect();
            let decide = |(v, pool): &(VehicleId, Vec<RequestId>)| (*v, self.accept(*v, pool, now));
            let decisions: Vec<(VehicleId, Option<Decision>)> = if self.cfg.parallel {
                jobs.par_iter().map(decide).collect()
            } else {
                jobs.iter().map(decide).collect()
            };

            for ((v, pool), (_, decision)) in jobs.iter().zip(decisions) {
                let kept: BTreeSet<RequestId> = decision
                    .as_ref()
                    .map(|d| d.group.members.iter().copied().collect())
                    .unwrap_or_default();
                let rejected: Vec<RequestId> = pool.iter().copied().filter(|r| !kept.contains(r)).collect();
                unmatched.extend(rejected.iter().copied());
                if let Some(t) = trace.as_mut() {
                    t.rejected.extend(rejected.iter().copied());
                    if let Some(d) = &decision {
                        t.choices.push(VehicleChoice {
                            vehicle: *v,
                            pool: pool.clone(),
                            group: d.group.members.clone(),
                            loss: d.loss,
                            tier_min_loss: d.tier_min_loss,
                        });
                    }
                }
                match decision {
                    Some(d) => {
                        held.insert(*v, d.group);
                    }
                    None => {
                        held.remove(v);
                    }
                }
            }
            if let Some(mut t) = trace {
                t.rejected.sort_unstable();
                out.trace.push(t);
            }
        }

        for (v, group) in held {
            self.commit(v, &group.members, group.schedule, now);
            out.assignments.push(Assignment {
                vehicle: v,
                requests: group.members,
            });
        }
        out
    }

    /// The vehicle's pick among the groups it can form from `pool`.
    fn accept(&self, v: VehicleId, pool: &[RequestId], now: Millis) -> Option<Decision> {
        let start = self.start_of(v, now);
        let vehicle = &self.vehicles[v.0 as usize];
        let reqs: Vec<&Request> = pool.iter().map(|r| &self.pool[r]).collect();
        let levels = build_groups(&self.planner, &start, &vehicle.schedule, &reqs, &self.graph);
        let multi = levels.levels.len() > 1;
        let tier: Vec<&Group> = levels.iter().filter(|g| (g.len() >= 2) == multi).collect();
        let scored: Vec<(GroupKey, &Group)> = tier.into_iter().map(|g| (self.group_key(g, pool), g)).collect();
        let tier_min_loss = scored.iter().map(|(k, _)| k.loss).min()?;
        let (key, group) = scored.into_iter().min_by(|a, b| a.0.cmp(&b.0))?;
        Some(Decision {
            loss: key.loss,
            tier_min_loss,
            group: group.clone(),
        })
    }

    fn group_key(&self, g: &Group, pool: &[RequestId]) -> GroupKey {
        let loss = shareability_loss(&self.graph, &g.members).expect("groups are cliques");
        let served: Millis = g.members.iter().map(|r| self.pool[r].trip_cost).sum();
        GroupKey {
            loss,
            pre_merge: self.is_pre_merge_pair(&g.members, pool),
            served,
            cost: g.cost,
            members: g.members.clone(),
        }
    }

    /// A pair whose member has the other as its only neighbour.
    fn is_pre_merge_pair(&self, members: &[RequestId], pool: &[RequestId]) -> bool {
        let &[a, b] = members else { return false };
        let lonely =
            |x: RequestId, y: RequestId| self.graph.degree(x) == 1 && self.graph.has_edge(x, y) && pool.contains(&y);
        lonely(a, b) || lonely(b, a)
    }

    /// Online greedy: requests in release order, each to the vehicle with
    /// the smallest insertion cost (ties: lower id), committed immediately.
    pub fn prunegdp_batch(&mut self, now: Millis) -> BatchOutcome {
        let mut out = BatchOutcome::default();
        let mut order: Vec<(Millis, RequestId)> = self.pool.values().map(|r| (r.release, r.id)).collect();
        order.sort_unstable();
        for (_, id) in order {
            let req = &self.pool[&id];
            let radius_s = (req.max_wait + (req.deadline - req.release)) as f64 / 1000.0;
            let best = self
                .nearby_feasible(req, now, radius_s)
                .into_iter()
                .min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
            let Some((v, _)) = best else { continue };
            let start = self.start_of(v, now);
            let ins = self
                .planner
                .insert_request(&start, &self.vehicles[v.0 as usize].schedule, req)
                .expect("candidate was feasible");
            self.commit(v, &[id], ins.schedule, now);
            out.assignments.push(Assignment {
                vehicle: v,
                requests: vec![id],
            });
        }
        out
    }

    fn commit(&mut self, v: VehicleId, members: &[RequestId], schedule: Schedule, now: Millis) {
        let vehicle = &mut self.vehicles[v.0 as usize];
        // the schedule was timed from this start
        vehicle.position.time = vehicle.position.time.max(now);
        vehicle.schedule = schedule;
        for &r in members {
            let prev = self.assigned.insert(r, v);
            debug_assert!(prev.is_none(), "request {r} assigned twice");
            vehicle.assigned.insert(r);
            self.pool.remove(&r);
            self.builder.remove(&mut self.graph, r);
        }
    }

    /// Checks fleet and bookkeeping invariants: feasible schedules, request
    /// partition and graph consistency.
    pub fn audit(&self) -> Result<(), AuditError> {
        for v in &self.vehicles {
            check_feasible(&v.schedule, v).map_err(|e| AuditError::Infeasible(v.id, e))?;
        }
        for id in self.pool.keys() {
            if self.assigned.contains_key(id) || self.expired.contains(id) {
                return Err(AuditError::NotPartitioned(*id));
            }
        }
        for id in self.assigned.keys() {
            if self.expired.contains(id) {
                return Err(AuditError::NotPartitioned(*id));
            }
        }
        if self.cfg.algorithm == Algorithm::Sard {
            let nodes: BTreeSet<RequestId> = self.graph.nodes().collect();
            let live: BTreeSet<RequestId> = self.pool.keys().copied().collect();
            if nodes != live {
                return Err(AuditError::Graph("graph nodes differ from the pool".into()));
            }
        }
        self.graph.audit().map_err(AuditError::Graph)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuditError {
    #[error("vehicle {0}: {1:?}")]
    Infeasible(VehicleId, Violation),
    #[error("request {0} is in more than one of pool, assigned and expired")]
    NotPartitioned(RequestId),
    #[error("shareability graph: {0}")]
    Graph(String),
}

/// `alpha * driven + penalty * unserved`, all times in milliseconds.
pub fn unified_cost(alpha: f64, penalty: f64, driven_ms: Millis, unserved_trip_ms: Millis) -> f64 {
    alpha * driven_ms as f64 + penalty * unserved_trip_ms as f64
}

struct Decision {
    group: Group,
    loss: usize,
    tier_min_loss: usize,
}

/// Acceptance order: lower loss, then a forced degree-one pair, then more
/// trip time served per unit of schedule cost, then larger groups, then ids.
#[derive(Debug, PartialEq, Eq)]
struct GroupKey {
    loss: usize,
    pre_merge: bool,
    served: Millis,
    cost: Millis,
    members: Vec<RequestId>,
}

impl Ord for GroupKey {
    fn cmp(&self, o: &Self) -> Ordering {
        self.loss
            .cmp(&o.loss)
            .then(o.pre_merge.cmp(&self.pre_merge))
            .then_with(|| {
                // higher served/cost first, compared without division
                let lhs = self.served as i128 * o.cost as i128;
                let rhs = o.served as i128 * self.cost as i128;
                rhs.cmp(&lhs)
            })
            .then(o.members.len().cmp(&self.members.len()))
            .then_with(|| self.members.cmp(&o.members))
    }
}

impl PartialOrd for GroupKey {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
