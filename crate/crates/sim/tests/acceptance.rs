//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints its own PASS/FAIL line.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs;
use std::panic;
use std::path::Path;
use std::time::Instant;

use common::{desk_network, desk_requests, desk_rows, desk_spec, fixture, Case};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structride_core::dispatch::{Algorithm, DispatchState};
use structride_core::insertion::{optimal_schedule_oracle, Planner};
use structride_core::model::{Request, RequestId, RouteStart, Schedule, StopKind, VehicleEvent, WayPoint};
use structride_core::roadnet::{secs_to_ms, Millis, NodeId, RoadNetwork, Router, DEFAULT_CACHE_CAPACITY};
use structride_core::shareability::{
    brute_force_graph, clique_partition_upper, shareability_loss, LogNormalFit, ShareabilityGraph,
};
use structride_sim::config::{Paths, SimConfig};
use structride_sim::engine::{random_fleet, Simulation, Summary};
use structride_sim::io::{build_requests, write_network, write_request_rows, RequestRow};
use structride_sim::report::run;
use structride_sim::workload::{generate, synthetic_grid, GridSpec, WorkloadSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("shareability loss goldens", loss_goldens),
        ("worked example end to end", worked_example),
        ("schedule oracles", schedule_oracles),
        ("constraint suite", constraint_suite),
        ("matcher vs greedy quality", quality),
        ("angle pruning soundness", angle_pruning),
        ("formula checks", formulas),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail}) [{secs:.1} s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ids(v: &[u32]) -> Vec<RequestId> {
    v.iter().map(|&i| RequestId(i)).collect()
}

fn graph_from(edges: &[(u32, u32)]) -> ShareabilityGraph {
    let mut g = ShareabilityGraph::new();
    for &(a, b) in edges {
        g.add_edge(RequestId(a), RequestId(b));
    }
    g
}

// ---------------------------------------------------------------- 1

fn loss_goldens() -> Outcome {
    let triangle = graph_from(&[(1, 2), (1, 3), (2, 3)]);
    let a = shareability_loss(&triangle, &ids(&[1, 3])).map_err(|e| e.to_string())?;
    let four = graph_from(&[(1, 2), (1, 3), (2, 3), (2, 4)]);
    let b = shareability_loss(&four, &ids(&[1, 2])).map_err(|e| e.to_string())?;
    ensure!(a == 2, "triangle merge of 1,3 lost {a}, expected 2");
    ensure!(b == 3, "merge of 1,2 lost {b}, expected 3");
    Ok(format!("losses {a} and {b}"))
}

// ---------------------------------------------------------------- 2

fn worked_example() -> Outcome {
    let mut lines = Vec::new();
    for (name, want_served) in [("sard", 4), ("prunegdp", 3)] {
        let t = Instant::now();
        let case = Case::load(&fixture("example1").join(format!("{name}.toml")));
        let router = Router::new(&case.net, 1000);
        let requests = case.requests(&router);
        let mut sim = Simulation::new(&router, &case.cfg, requests, case.vehicles.clone());
        let mut groups = BTreeSet::new();
        while let Some(rec) = sim.step() {
            groups.extend(rec.outcome.assignments.into_iter().map(|a| a.requests));
        }
        let secs = t.elapsed().as_secs_f64();
        let served: BTreeSet<RequestId> = groups.iter().flatten().copied().collect();
        ensure!(served.len() == want_served, "{name} served {}", served.len());
        ensure!(secs < 1.0, "{name} took {secs:.2} s");
        if name == "sard" {
            let want: BTreeSet<Vec<RequestId>> = [ids(&[1, 3]), ids(&[2, 4])].into();
            ensure!(groups == want, "matcher groups {groups:?}");
        } else {
            ensure!(!served.contains(&RequestId(4)), "greedy served request 4");
        }
        lines.push(format!("{name} {want_served}/4"));
    }
    Ok(lines.join(", "))
}

// ---------------------------------------------------------------- 3

/// Cost of `points` from `start`, or `None` if coverage of pickups, order,
/// capacity or any deadline fails. Uses plain Dijkstra per leg.
fn evaluate(net: &RoadNetwork, start: RouteStart, points: &[WayPoint]) -> Option<Millis> {
    let (mut node, mut t) = (start.position.node, start.position.time);
    let mut load = start.onboard as i64;
    let mut picked = BTreeSet::new();
    for (k, p) in points.iter().enumerate() {
        t += net.shortest_travel_cost(node, p.node)?;
        node = p.node;
        if t > p.ddl {
            return None;
        }
        match p.kind {
            StopKind::Pickup => {
                picked.insert(p.request);
                load += p.riders as i64;
            }
            StopKind::Dropoff => {
                let pickup_later = points[k..]
                    .iter()
                    .any(|q| q.kind == StopKind::Pickup && q.request == p.request);
                if pickup_later {
                    return None;
                }
                load -= p.riders as i64;
            }
        }
        if load > start.capacity as i64 {
            return None;
        }
    }
    Some(t - start.position.time)
}

fn near(rng: &mut ChaCha8Rng, side: usize, c: NodeId, reach: i64) -> NodeId {
    let s = side as i64;
    let (x, y) = (c as i64 % s, c as i64 / s);
    let dx = (x + rng.random_range(-reach..=reach)).clamp(0, s - 1);
    let dy = (y + rng.random_range(-reach..=reach)).clamp(0, s - 1);
    (dy * s + dx) as NodeId
}

fn schedule_oracles() -> Outcome {
    const SIDE: usize = 5;
    let nets: Vec<RoadNetwork> = (0..10)
        .map(|seed| {
            synthetic_grid(&GridSpec {
                side: SIDE,
                seed,
                ..GridSpec::default()
            })
        })
        .collect();
    let nodes = (SIDE * SIDE) as NodeId;
    let (mut insert_feasible, mut pairs, mut bigger, mut bigger_equal) = (0, 0, 0, 0);

    for i in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let net = &nets[(i % 10) as usize];
        let router = Router::new(net, 10_000);
        let planner = Planner::new(&router, true);
        let mk = |rng: &mut ChaCha8Rng, id: u32, s: NodeId, e: NodeId| {
            let gamma = rng.random_range(1.3..3.0);
            Request::new(RequestId(id), s, e, 1, 0, gamma, 10_000_000, &router).unwrap()
        };

        // insertion into a schedule of up to three requests
        let start = RouteStart::idle(rng.random_range(0..nodes), 0, rng.random_range(2..=4));
        let mut base = Schedule::new();
        let k = rng.random_range(0..=3);
        let mut next = 0;
        while next < k + 1 {
            let (s, e) = (rng.random_range(0..nodes), rng.random_range(0..nodes));
            if s == e {
                continue;
            }
            let r = mk(&mut rng, next, s, e);
            next += 1;
            if next <= k {
                if let Some(ins) = planner.insert_request(&start, &base, &r) {
                    base = ins.schedule;
                }
                continue;
            }
            let pts = base.points();
            let base_cost = evaluate(net, start, pts).ok_or("base schedule infeasible")?;
            let mut best: Option<Millis> = None;
            for a in 0..=pts.len() {
                for b in a..=pts.len() {
                    let mut cand = pts[..a].to_vec();
                    cand.push(r.pickup());
                    cand.extend_from_slice(&pts[a..b]);
                    cand.push(r.dropoff());
                    cand.extend_from_slice(&pts[b..]);
                    if let Some(c) = evaluate(net, start, &cand) {
                        best = Some(best.map_or(c - base_cost, |x: Millis| x.min(c - base_cost)));
                    }
                }
            }
            let got = planner.insert_request(&start, &base, &r).map(|ins| ins.delta);
            ensure!(
                got == best,
                "instance {i}: insertion delta {got:?}, exhaustive {best:?}"
            );
            insert_feasible += usize::from(got.is_some());
        }

        // a group of two to four requests sharing a corridor
        let size = 2 + (i % 3) as usize;
        let hub = rng.random_range(0..nodes);
        let target = rng.random_range(0..nodes);
        let start = RouteStart::idle(hub, 0, 4);
        let mut group = Vec::new();
        while group.len() < size {
            let (s, e) = (near(&mut rng, SIDE, hub, 1), near(&mut rng, SIDE, target, 1));
            if s != e {
                group.push(mk(&mut rng, group.len() as u32, s, e));
            }
        }
        let refs: Vec<&Request> = group.iter().collect();
        let graph = brute_force_graph(&planner, &refs, 4);
        let members: Vec<(&Request, usize)> = group.iter().map(|r| (r, graph.degree(r.id))).collect();
        let empty = Schedule::new();
        let heuristic = planner
            .build_group_schedule(&start, &empty, &members)
            .map(|s| s.cost(start.position, true));
        let oracle =
            optimal_schedule_oracle(&router, &start, &empty, &refs, true).map(|s| s.cost(start.position, true));
        if size == 2 {
            ensure!(
                heuristic == oracle,
                "instance {i}: pair cost {heuristic:?}, optimum {oracle:?}"
            );
            pairs += usize::from(oracle.is_some());
        } else if let Some(best) = oracle {
            bigger += 1;
            if let Some(c) = heuristic {
                ensure!(c >= best, "instance {i}: heuristic {c} below optimum {best}");
                bigger_equal += usize::from(c == best);
            }
        } else {
            ensure!(heuristic.is_none(), "instance {i}: heuristic feasible, optimum not");
        }
    }
    let rate = bigger_equal as f64 / bigger.max(1) as f64;
    ensure!(
        rate >= 0.7,
        "3-4 request groups optimal in {:.1}% of {bigger}",
        rate * 100.0
    );
    Ok(format!(
        "1000 insertions exact ({insert_feasible} feasible), {pairs} feasible pairs exact, \
         3-4 request groups optimal in {:.1}% of {bigger}",
        rate * 100.0
    ))
}

// ---------------------------------------------------------------- 4

struct Trip {
    riders: u32,
    pickup_by: Millis,
    drop_by: Millis,
}

/// Coverage, order, capacity and deadline of every committed schedule,
/// with arrival times recomputed leg by leg.
fn check_fleet(
    state: &DispatchState<'_, '_>,
    net: &RoadNetwork,
    trips: &BTreeMap<RequestId, Trip>,
) -> Result<(), String> {
    for v in state.vehicles() {
        let pts = v.schedule.points();
        let mut pickups = BTreeMap::new();
        let mut drops = BTreeMap::new();
        for (k, p) in pts.iter().enumerate() {
            let slot = if p.kind == StopKind::Pickup {
                &mut pickups
            } else {
                &mut drops
            };
            if slot.insert(p.request, k).is_some() {
                return Err(format!("vehicle {}: request {} listed twice", v.id, p.request));
            }
        }
        for r in &v.assigned {
            let onboard = v.onboard.contains_key(r);
            if !drops.contains_key(r) || pickups.contains_key(r) == onboard {
                return Err(format!("vehicle {}: coverage of {r}", v.id));
            }
        }
        let listed: BTreeSet<RequestId> = pickups.keys().chain(drops.keys()).copied().collect();
        if listed != v.assigned {
            return Err(format!("vehicle {}: schedule lists requests it does not hold", v.id));
        }
        for (r, &p) in &pickups {
            if p > drops[r] {
                return Err(format!("vehicle {}: order of {r}", v.id));
            }
        }
        let (mut node, mut t) = (v.position.node, v.position.time);
        let mut load: i64 = v.onboard.keys().map(|r| trips[r].riders as i64).sum();
        for p in pts {
            t += net.shortest_travel_cost(node, p.node).ok_or("unreachable leg")?;
            node = p.node;
            let trip = &trips[&p.request];
            let (due, delta) = match p.kind {
                StopKind::Pickup => (trip.pickup_by, trip.riders as i64),
                StopKind::Dropoff => (trip.drop_by, -(trip.riders as i64)),
            };
            load += delta;
            if load > v.capacity as i64 {
                return Err(format!("vehicle {}: capacity", v.id));
            }
            if t > due {
                return Err(format!("vehicle {}: {} due {due}, arrives {t}", v.id, p.request));
            }
        }
    }
    Ok(())
}

fn constraint_suite() -> Outcome {
    let net = desk_network();
    let mut violations: Vec<String> = Vec::new();
    let (mut batches, mut groups, mut multi, mut peak) = (0u64, 0u64, 0u64, 0usize);
    for seed in 1..=200u64 {
        let router = Router::new(&net, DEFAULT_CACHE_CAPACITY);
        let cfg = SimConfig {
            seed,
            ..SimConfig::default()
        };
        // odd seeds at the desk rate, even seeds ten times denser so that
        // batches hold enough requests to share
        let requests = if seed % 2 == 1 {
            desk_requests(&router, seed, cfg.gamma)
        } else {
            let spec = WorkloadSpec {
                rate_per_s: 1.0,
                ..desk_spec(seed)
            };
            let rows: Vec<(u64, RequestRow)> = generate(&net, &spec)
                .unwrap()
                .into_iter()
                .enumerate()
                .map(|(i, r)| (i as u64 + 2, r))
                .collect();
            build_requests(
                Path::new("generated"),
                &rows,
                &router,
                cfg.gamma,
                secs_to_ms(cfg.max_wait_s),
            )
            .unwrap()
        };
        let trips: BTreeMap<RequestId, Trip> = requests
            .iter()
            .map(|r| {
                let t = Trip {
                    riders: r.riders,
                    pickup_by: r.deadline - r.trip_cost,
                    drop_by: r.deadline,
                };
                (r.id, t)
            })
            .collect();
        let fleet = random_fleet(&net, cfg.fleet, cfg.capacity, seed);
        let mut sim = Simulation::new(&router, &cfg, requests, fleet);
        let mut seen = BTreeSet::new();
        let mut snapshot = None;
        while let Some(rec) = sim.step_with(|st| snapshot = Some(st.graph().clone())) {
            batches += 1;
            let graph = snapshot.take().expect("hook ran");
            for a in &rec.outcome.assignments {
                groups += 1;
                multi += u64::from(a.requests.len() > 1);
                if !graph.is_clique(&a.requests) {
                    violations.push(format!("seed {seed}: {:?} not a clique", a.requests));
                }
                for r in &a.requests {
                    if !seen.insert(*r) {
                        violations.push(format!("seed {seed}: {r} assigned twice"));
                    }
                }
            }
            for (_, ev) in &rec.events {
                match *ev {
                    VehicleEvent::Pickup { request, time } if time > trips[&request].pickup_by => {
                        violations.push(format!("seed {seed}: late pickup of {request}"))
                    }
                    VehicleEvent::Dropoff { request, time } if time > trips[&request].drop_by => {
                        violations.push(format!("seed {seed}: late drop-off of {request}"))
                    }
                    _ => {}
                }
            }
            peak = peak.max(
                sim.state()
                    .vehicles()
                    .iter()
                    .map(|v| v.assigned.len())
                    .max()
                    .unwrap_or(0),
            );
            if let Err(e) = check_fleet(sim.state(), &net, &trips) {
                violations.push(format!("seed {seed}, batch {}: {e}", rec.index));
            }
        }
        let s = sim.summary();
        if s.served + s.expired != s.requests {
            violations.push(format!(
                "seed {seed}: {} served + {} expired != {}",
                s.served, s.expired, s.requests
            ));
        }
    }
    ensure!(
        violations.is_empty(),
        "{} violations, first: {}",
        violations.len(),
        violations.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
    );
    Ok(format!(
        "200 runs, {batches} batches, {groups} groups ({multi} shared), \
         up to {peak} requests on one schedule, zero violations"
    ))
}

// ---------------------------------------------------------------- 5

fn desk_run(seed: u64, cfg: &SimConfig) -> (Summary, f64) {
    let net = desk_network();
    let router = Router::new(&net, DEFAULT_CACHE_CAPACITY);
    let requests = desk_requests(&router, seed, cfg.gamma);
    let fleet = random_fleet(&net, cfg.fleet, cfg.capacity, seed);
    let t = Instant::now();
    let mut sim = Simulation::new(&router, cfg, requests, fleet);
    while sim.step().is_some() {}
    (sim.summary(), t.elapsed().as_secs_f64())
}

fn quality() -> Outcome {
    let (mut sard_rate, mut greedy_rate, mut sard_cost, mut greedy_cost) = (0.0, 0.0, 0.0, 0.0);
    let mut slowest: f64 = 0.0;
    println!("  seed  service: matcher  greedy  margin(pp) | unified cost (s): matcher  greedy  margin");
    for seed in 1..=20u64 {
        let cfg = |algorithm| SimConfig {
            seed,
            algorithm,
            ..SimConfig::default()
        };
        let (s, ts) = desk_run(seed, &cfg(Algorithm::Sard));
        let (g, tg) = desk_run(seed, &cfg(Algorithm::Prunegdp));
        slowest = slowest.max(ts + tg);
        println!(
            "  {seed:>4}  {:>16.3} {:>7.3} {:>+10.1}  | {:>25.0} {:>7.0} {:>+7.0}",
            s.service_rate,
            g.service_rate,
            (s.service_rate - g.service_rate) * 100.0,
            s.unified_cost_s,
            g.unified_cost_s,
            s.unified_cost_s - g.unified_cost_s
        );
        sard_rate += s.service_rate / 20.0;
        greedy_rate += g.service_rate / 20.0;
        sard_cost += s.unified_cost_s / 20.0;
        greedy_cost += g.unified_cost_s / 20.0;
    }
    let detail = format!(
        "mean service {:.3} vs {:.3}, mean unified cost {:.0} s vs {:.0} s, slowest seed {slowest:.1} s",
        sard_rate, greedy_rate, sard_cost, greedy_cost
    );
    ensure!(sard_rate >= greedy_rate, "{detail}");
    ensure!(sard_cost <= greedy_cost, "{detail}");
    ensure!(slowest < 60.0, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------- 6

fn angle_pruning() -> Outcome {
    let (mut recall_sum, mut worst_gap): (f64, f64) = (0.0, 0.0);
    let seeds = 1..=5u64;
    let n = seeds.clone().count() as f64;
    let mut gaps = Vec::new();
    for seed in seeds {
        let pruned = SimConfig {
            seed,
            angle: PI,
            edge_recall: true,
            ..SimConfig::default()
        };
        let open = SimConfig {
            angle: 2.0 * PI,
            edge_recall: false,
            ..pruned.clone()
        };
        let (p, _) = desk_run(seed, &pruned);
        let (o, _) = desk_run(seed, &open);
        let recall = p.edge_recall.ok_or("recall not tracked")?;
        recall_sum += recall;
        let gap = (p.service_rate - o.service_rate) * 100.0;
        worst_gap = worst_gap.max(gap.abs());
        gaps.push(format!("{gap:+.1}"));
    }
    let recall = recall_sum / n;
    let detail = format!(
        "mean edge recall {:.1}%, service change per seed [{}] pp",
        recall * 100.0,
        gaps.join(", ")
    );
    ensure!(recall >= 0.55, "{detail}");
    ensure!(worst_gap <= 3.0, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------- 7

type Adj = BTreeMap<u32, BTreeSet<u32>>;

fn merged_degree(adj: &Adj, group: &BTreeSet<u32>) -> usize {
    group
        .iter()
        .map(|m| adj[m].clone())
        .reduce(|a, b| &a & &b)
        .unwrap_or_default()
        .difference(group)
        .count()
}

fn formulas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut cliques_checked = 0;
    for _ in 0..80 {
        let n = rng.random_range(2..=12u32);
        let p = rng.random_range(0.2..0.8);
        let mut g = ShareabilityGraph::new();
        for a in 0..n {
            g.add_node(RequestId(a));
            for b in 0..a {
                if rng.random_bool(p) {
                    g.add_edge(RequestId(a), RequestId(b));
                }
            }
        }
        let adj: Adj = g
            .nodes()
            .map(|r| (r.0, g.neighbors(r).unwrap().iter().map(|x| x.0).collect()))
            .collect();
        for mask in 1u32..(1 << n) {
            let set: Vec<u32> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let clique = set
                .iter()
                .enumerate()
                .all(|(i, a)| set[i + 1..].iter().all(|b| adj[a].contains(b)));
            if !clique {
                continue;
            }
            let members: BTreeSet<u32> = set.iter().copied().collect();
            // merge the rest into one node, then that node with r: r brings
            // its whole neighbourhood and the two share one edge
            let want = if set.len() == 1 {
                adj[&set[0]].len()
            } else {
                set.iter()
                    .map(|r| {
                        let rest: BTreeSet<u32> = members.iter().copied().filter(|x| x != r).collect();
                        merged_degree(&adj, &rest) + adj[r].len() - 1 - merged_degree(&adj, &members)
                    })
                    .max()
                    .unwrap()
            };
            let got = shareability_loss(&g, &ids(&set)).map_err(|e| e.to_string())?;
            ensure!(got == want, "group {set:?}: loss {got}, edge delta {want}");
            cliques_checked += 1;
        }
    }

    for _ in 0..100 {
        let n: u64 = rng.random_range(1..100_000);
        let e: u64 = rng.random_range(0..=n * (n - 1) / 2);
        let d = 4 * n * n - 4 * n - 8 * e + 1;
        let (mut k, mut hi) = (0u64, n + 1);
        while k < hi {
            let mid = (k + hi).div_ceil(2);
            if (2 * mid - 1) * (2 * mid - 1) <= d {
                k = mid;
            } else {
                hi = mid - 1;
            }
        }
        let got = clique_partition_upper(n, e);
        ensure!(got == k, "partition bound for n={n} e={e}: {got}, expected {k}");
    }

    let fit = LogNormalFit::new(600f64.ln(), 0.8, 1.5).map_err(|e| e.to_string())?;
    let mut prev = f64::INFINITY;
    for step in 0..=60 {
        let delta = 1e-6 + (PI - 1e-6) * step as f64 / 60.0;
        let p = fit.expected_sharing_probability(delta).map_err(|e| e.to_string())?;
        ensure!(
            p <= prev + 1e-4,
            "sharing probability rises at delta {delta:.3}: {prev} to {p}"
        );
        prev = p;
    }
    let at_zero = fit.expected_sharing_probability(1e-6).map_err(|e| e.to_string())?;
    ensure!(
        at_zero >= 1.0 - 1e-4,
        "sharing probability near zero angle is {at_zero}"
    );
    Ok(format!(
        "{cliques_checked} cliques, 100 partition bounds, sharing probability {at_zero:.5} at zero angle and {prev:.3} at pi"
    ))
}

// ---------------------------------------------------------------- 8

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let net = desk_network();
    write_network(&dir.path().join("net"), &net).map_err(|e| e.to_string())?;
    let rows: Vec<RequestRow> = desk_rows(&net, 8).into_iter().map(|(_, r)| r).collect();
    let file = fs::File::create(dir.path().join("requests.csv")).map_err(|e| e.to_string())?;
    write_request_rows(file, &rows).map_err(|e| e.to_string())?;
    let cfg = SimConfig {
        seed: 8,
        paths: Paths {
            network: dir.path().join("net"),
            requests: dir.path().join("requests.csv"),
            vehicles: None,
            output: dir.path().join("out"),
            trace: true,
        },
        ..SimConfig::default()
    };
    let mut reports = Vec::new();
    for _ in 0..2 {
        run(&cfg).map_err(|e| e.to_string())?;
        let report = fs::read(dir.path().join("out/report.json")).map_err(|e| e.to_string())?;
        let trace = fs::read(dir.path().join("out/trace.jsonl")).map_err(|e| e.to_string())?;
        reports.push((report, trace));
        fs::remove_dir_all(dir.path().join("out")).map_err(|e| e.to_string())?;
    }
    ensure!(reports[0].0 == reports[1].0, "report.json differs between runs");
    ensure!(reports[0].1 == reports[1].1, "trace.jsonl differs between runs");
    Ok(format!("report.json identical ({} bytes)", reports[0].0.len()))
}
