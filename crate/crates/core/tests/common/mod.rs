#![allow(dead_code)]

use rand::Rng;
use structride_core::model::{Position, Request, RequestId, Schedule, StopKind, WayPoint};
use structride_core::roadnet::{Millis, NodeId, RoadNetwork, Router};

/// Jittered `side x side` street grid with random two-way speeds.
pub fn grid(rng: &mut impl Rng, side: usize) -> RoadNetwork {
    let coords: Vec<(f64, f64)> = (0..side * side)
        .map(|i| {
            let (c, r) = ((i % side) as f64, (i / side) as f64);
            (
                104.0 + (c + rng.random_range(-0.2..0.2)) * 0.003,
                30.6 + (r + rng.random_range(-0.2..0.2)) * 0.003,
            )
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..side * side {
        let (c, r) = (i % side, i / side);
        let mut link = |j: usize| {
            let ms = rng.random_range(20_000..60_000);
            edges.push((i as NodeId, j as NodeId, ms));
            edges.push((j as NodeId, i as NodeId, ms));
        };
        if c + 1 < side {
            link(i + 1);
        }
        if r + 1 < side {
            link(i + side);
        }
    }
    RoadNetwork::from_parts(coords, &edges).unwrap()
}

pub fn random_request(rng: &mut impl Rng, router: &Router<'_>, id: u32, release: Millis, gamma: f64) -> Request {
    let n = router.network().node_count() as NodeId;
    loop {
        let s = rng.random_range(0..n);
        let e = rng.random_range(0..n);
        if s != e {
            return Request::new(RequestId(id), s, e, 1, release, gamma, 10_000_000, router).unwrap();
        }
    }
}

/// Arrival times along `points` from `start`, computed with plain Dijkstra.
pub fn arrivals(net: &RoadNetwork, start: Position, points: &[WayPoint]) -> Vec<Millis> {
    let (mut node, mut t) = (start.node, start.time);
    points
        .iter()
        .map(|p| {
            t += net.shortest_travel_cost(node, p.node).expect("connected");
            node = p.node;
            t
        })
        .collect()
}

/// Cost of `points` per an independent evaluator, or `None` when any of
/// order, capacity or deadline fails. `onboard` riders are already seated.
pub fn evaluate(
    net: &RoadNetwork,
    start: Position,
    capacity: u32,
    onboard: u32,
    points: &[WayPoint],
    deadhead: bool,
) -> Option<Millis> {
    if points.is_empty() {
        return Some(0);
    }
    let times = arrivals(net, start, points);
    let mut load = onboard as i64;
    let mut picked = std::collections::BTreeSet::new();
    for (p, &t) in points.iter().zip(&times) {
        if t > p.ddl {
            return None;
        }
        match p.kind {
            StopKind::Pickup => {
                picked.insert(p.request);
                load += p.riders as i64;
            }
            StopKind::Dropoff => {
                let later_pickup = points
                    .iter()
                    .skip_while(|q| !std::ptr::eq(*q, p))
                    .any(|q| q.kind == StopKind::Pickup && q.request == p.request);
                if later_pickup {
                    return None;
                }
                load -= p.riders as i64;
            }
        }
        if load > capacity as i64 {
            return None;
        }
    }
    let last = *times.last().unwrap();
    Some(if deadhead { last - start.time } else { last - times[0] })
}

pub fn schedule_of(net: &RoadNetwork, start: Position, points: Vec<WayPoint>) -> Schedule {
    let router = Router::uncached(net);
    let mut s = Schedule::from_points(points);
    s.recompute_times(start, &router).unwrap();
    s
}
