//! Requests, vehicles, schedules and the four schedule constraints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roadnet::{Millis, NodeId, RoadNetwork, Router};

/// Default cap on how long an unassigned request may wait (5 minutes).
pub const DEFAULT_MAX_WAIT_MS: Millis = 300_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("request {id}: destination {to} unreachable from source {from}")]
    UnreachableTrip { id: RequestId, from: NodeId, to: NodeId },
    #[error("request {id}: deadline {deadline} ms leaves no time for the {trip} ms trip")]
    DeadlineTooTight {
        id: RequestId,
        deadline: Millis,
        trip: Millis,
    },
    #[error("request {id}: rider count must be at least 1")]
    NoRiders { id: RequestId },
    #[error("detour ratio must exceed 1, got {0}")]
    BadDetourRatio(f64),
    #[error("schedule leg {from} -> {to} is unreachable")]
    UnreachableLeg { from: NodeId, to: NodeId },
}

/// A rider demand: `riders` people from `source` to `destination`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub source: NodeId,
    pub destination: NodeId,
    pub riders: u32,
    pub release: Millis,
    pub deadline: Millis,
    pub max_wait: Millis,
    pub trip_cost: Millis,
}

impl Request {
    /// Request with deadline `release + gamma * cost(source, destination)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: RequestId,
        source: NodeId,
        destination: NodeId,
        riders: u32,
        release: Millis,
        gamma: f64,
        max_wait_cap: Millis,
        router: &Router<'_>,
    ) -> Result<Self, ModelError> {
        if gamma.is_nan() || gamma <= 1.0 {
            return Err(ModelError::BadDetourRatio(gamma));
        }
        let trip = trip_cost(id, source, destination, router)?;
        let deadline = release + (gamma * trip as f64).round() as Millis;
        Self::assemble(id, source, destination, riders, release, deadline, max_wait_cap, trip)
    }

    /// Request with an explicit absolute deadline.
    #[allow(clippy::too_many_arguments)]
    pub fn with_deadline(
        id: RequestId,
        source: NodeId,
        destination: NodeId,
        riders: u32,
        release: Millis,
        deadline: Millis,
        max_wait_cap: Millis,
        router: &Router<'_>,
    ) -> Result<Self, ModelError> {
        let trip = trip_cost(id, source, destination, router)?;
        Self::assemble(id, source, destination, riders, release, deadline, max_wait_cap, trip)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        id: RequestId,
        source: NodeId,
        destination: NodeId,
        riders: u32,
        release: Millis,
        deadline: Millis,
        max_wait_cap: Millis,
        trip_cost: Millis,
    ) -> Result<Self, ModelError> {
        if riders == 0 {
            return Err(ModelError::NoRiders { id });
        }
        let slack = deadline - trip_cost - release;
        if slack < 0 {
            return Err(ModelError::DeadlineTooTight {
                id,
                deadline,
                trip: trip_cost,
            });
        }
        Ok(Self {
            id,
            source,
            destination,
            riders,
            release,
            deadline,
            max_wait: max_wait_cap.min(slack),
            trip_cost,
        })
    }

    /// Latest pickup time that still allows a direct ride to meet the deadline.
    pub fn pickup_deadline(&self) -> Millis {
        self.deadline - self.trip_cost
    }

    /// Last instant at which the request may still be unassigned.
    pub fn expires_at(&self) -> Millis {
        self.release + self.max_wait
    }

    pub fn pickup(&self) -> WayPoint {
        WayPoint::new(
            self.source,
            StopKind::Pickup,
            self.id,
            self.riders,
            self.pickup_deadline(),
        )
    }

    pub fn dropoff(&self) -> WayPoint {
        WayPoint::new(self.destination, StopKind::Dropoff, self.id, self.riders, self.deadline)
    }
}

fn trip_cost(id: RequestId, from: NodeId, to: NodeId, router: &Router<'_>) -> Result<Millis, ModelError> {
    router
        .cost(from, to)
        .ok_or(ModelError::UnreachableTrip { id, from, to })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WayPoint {
    pub node: NodeId,
    pub kind: StopKind,
    pub request: RequestId,
    pub riders: u32,
    pub ddl: Millis,
    pub arrive: Millis,
    pub buf: Millis,
}

impl WayPoint {
    pub fn new(node: NodeId, kind: StopKind, request: RequestId, riders: u32, ddl: Millis) -> Self {
        Self {
            node,
            kind,
            request,
            riders,
            ddl,
            arrive: 0,
            buf: 0,
        }
    }

    pub fn slack(&self) -> Millis {
        self.ddl - self.arrive
    }

    /// Change in on-board riders when this stop is served.
    pub fn load_delta(&self) -> i64 {
        match self.kind {
            StopKind::Pickup => self.riders as i64,
            StopKind::Dropoff => -(self.riders as i64),
        }
    }
}

/// Where a vehicle will next be free to move from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    pub node: NodeId,
    pub time: Millis,
}

/// Everything schedule evaluation needs to know about the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteStart {
    pub position: Position,
    pub capacity: u32,
    pub onboard: u32,
}

impl RouteStart {
    pub fn idle(node: NodeId, time: Millis, capacity: u32) -> Self {
        Self {
            position: Position { node, time },
            capacity,
            onboard: 0,
        }
    }
}

/// Ordered way-points with cached arrival and buffer times.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    points: Vec<WayPoint>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps way-points; call [`Schedule::recompute_times`] before use.
    pub fn from_points(points: Vec<WayPoint>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[WayPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        self.points.iter().map(|p| p.node).collect()
    }

    pub fn requests(&self) -> BTreeSet<RequestId> {
        self.points.iter().map(|p| p.request).collect()
    }

    pub(crate) fn pop_front(&mut self) -> Option<WayPoint> {
        (!self.points.is_empty()).then(|| self.points.remove(0))
    }

    /// Fills `arrive` forward from `start` and `buf` backward:
    /// `buf(last) = ddl(last) - arrive(last)` and
    /// `buf(o_x) = min(buf(o_{x+1}), ddl(o_{x+1}) - arrive(o_{x+1}))`.
    pub fn recompute_times(&mut self, start: Position, router: &Router<'_>) -> Result<(), ModelError> {
        let mut at = start;
        for p in &mut self.points {
            let leg = router.cost(at.node, p.node).ok_or(ModelError::UnreachableLeg {
                from: at.node,
                to: p.node,
            })?;
            p.arrive = at.time + leg;
            at = Position {
                node: p.node,
                time: p.arrive,
            };
        }
        let Some(last) = self.points.last_mut() else {
            return Ok(());
        };
        last.buf = last.slack();
        for x in (0..self.points.len() - 1).rev() {
            let next = self.points[x + 1];
            self.points[x].buf = next.buf.min(next.slack());
        }
        Ok(())
    }

    pub fn last_arrival(&self) -> Option<Millis> {
        self.points.last().map(|p| p.arrive)
    }

    /// Driven time of the schedule from cached arrivals. With
    /// `include_deadhead` the leg from the vehicle position counts too.
    pub fn cost(&self, start: Position, include_deadhead: bool) -> Millis {
        match (self.points.first(), self.points.last()) {
            (Some(_), Some(last)) if include_deadhead => last.arrive - start.time,
            (Some(first), Some(last)) => last.arrive - first.arrive,
            _ => 0,
        }
    }
}

/// Sum of consecutive leg costs, recomputed leg by leg.
pub fn schedule_cost(
    schedule: &Schedule,
    start: Position,
    include_deadhead: bool,
    router: &Router<'_>,
) -> Option<Millis> {
    let mut total = 0;
    let mut prev = if include_deadhead { Some(start.node) } else { None };
    for p in schedule.points() {
        if let Some(u) = prev {
            total += router.cost(u, p.node)?;
        }
        prev = Some(p.node);
    }
    Some(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Violation {
    Coverage,
    Order,
    Capacity,
    Deadline,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Violation::Coverage => "coverage",
            Violation::Order => "order",
            Violation::Capacity => "capacity",
            Violation::Deadline => "deadline",
        };
        f.write_str(s)
    }
}

/// A vehicle with its committed schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub capacity: u32,
    pub position: Position,
    pub schedule: Schedule,
    /// Requests committed to this vehicle and not yet dropped off.
    pub assigned: BTreeSet<RequestId>,
    /// Riders currently on board, per request.
    pub onboard: BTreeMap<RequestId, u32>,
}

impl Vehicle {
    pub fn new(id: VehicleId, node: NodeId, capacity: u32, time: Millis) -> Self {
        Self {
            id,
            capacity,
            position: Position { node, time },
            schedule: Schedule::new(),
            assigned: BTreeSet::new(),
            onboard: BTreeMap::new(),
        }
    }

    pub fn onboard_riders(&self) -> u32 {
        self.onboard.values().sum()
    }

    pub fn start(&self) -> RouteStart {
        RouteStart {
            position: self.position,
            capacity: self.capacity,
            onboard: self.onboard_riders(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.schedule.is_empty()
    }

    /// Moves the vehicle along its schedule up to time `t`.
    ///
    /// Way-points reached by `t` are served. If the vehicle is between
    /// way-points at `t` it is placed on the first path node it reaches at or
    /// after `t`, so committed arrival times stay valid. Idle vehicles wait.
    pub fn advance_to(&mut self, t: Millis, net: &RoadNetwork) -> Vec<VehicleEvent> {
        let mut events = Vec::new();
        while let Some(next) = self.schedule.points().first().copied() {
            if next.arrive <= t {
                if next.node != self.position.node || next.arrive != self.position.time {
                    events.push(VehicleEvent::Drive {
                        from: self.position.node,
                        to: next.node,
                        depart: self.position.time,
                        arrive: next.arrive,
                    });
                }
                self.position = Position {
                    node: next.node,
                    time: next.arrive,
                };
                self.schedule.pop_front();
                match next.kind {
                    StopKind::Pickup => {
                        self.onboard.insert(next.request, next.riders);
                        events.push(VehicleEvent::Pickup {
                            request: next.request,
                            time: next.arrive,
                        });
                    }
                    StopKind::Dropoff => {
                        self.onboard.remove(&next.request);
                        self.assigned.remove(&next.request);
                        events.push(VehicleEvent::Dropoff {
                            request: next.request,
                            time: next.arrive,
                        });
                    }
                }
                continue;
            }
            if self.position.time < t {
                let path = net
                    .shortest_path(self.position.node, next.node)
                    .expect("committed leg is reachable");
                let depart = self.position.time;
                let &(node, offset) = path
                    .iter()
                    .find(|&&(_, off)| depart + off >= t)
                    .expect("leg ends after t");
                if node != self.position.node {
                    events.push(VehicleEvent::Drive {
                        from: self.position.node,
                        to: node,
                        depart,
                        arrive: depart + offset,
                    });
                }
                self.position = Position {
                    node,
                    time: depart + offset,
                };
            }
            return events;
        }
        self.position.time = self.position.time.max(t);
        events
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum VehicleEvent {
    Drive {
        from: NodeId,
        to: NodeId,
        depart: Millis,
        arrive: Millis,
    },
    Pickup {
        request: RequestId,
        time: Millis,
    },
    Dropoff {
        request: RequestId,
        time: Millis,
    },
}

/// First violated constraint among coverage, order, capacity and deadline,
/// evaluated against the vehicle's assigned and on-board requests. Arrival
/// times must already be recomputed.
pub fn check_feasible(schedule: &Schedule, vehicle: &Vehicle) -> Result<(), Violation> {
    let mut pickups: BTreeMap<RequestId, usize> = BTreeMap::new();
    let mut dropoffs: BTreeMap<RequestId, usize> = BTreeMap::new();
    for (i, p) in schedule.points().iter().enumerate() {
        let slot = match p.kind {
            StopKind::Pickup => &mut pickups,
            StopKind::Dropoff => &mut dropoffs,
        };
        if slot.insert(p.request, i).is_some() {
            return Err(Violation::Coverage);
        }
    }
    let in_schedule: BTreeSet<RequestId> = pickups.keys().chain(dropoffs.keys()).copied().collect();
    if in_schedule != vehicle.assigned {
        return Err(Violation::Coverage);
    }
    for r in &vehicle.assigned {
        let onboard = vehicle.onboard.contains_key(r);
        if !dropoffs.contains_key(r) || pickups.contains_key(r) == onboard {
            return Err(Violation::Coverage);
        }
    }
    for (r, &drop) in &dropoffs {
        if pickups.get(r).is_some_and(|&pick| pick > drop) {
            return Err(Violation::Order);
        }
    }
    let mut load = vehicle.onboard_riders() as i64;
    if load > vehicle.capacity as i64 {
        return Err(Violation::Capacity);
    }
    for p in schedule.points() {
        load += p.load_delta();
        if load > vehicle.capacity as i64 {
            return Err(Violation::Capacity);
        }
    }
    if schedule.points().iter().any(|p| p.arrive > p.ddl) {
        return Err(Violation::Deadline);
    }
    Ok(())
}
