//! Shareability graph over live requests, grouping loss and analytic
//! diagnostics.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use statrs::function::erf::erf;
use thiserror::Error;

use crate::insertion::Planner;
use crate::model::{Request, RequestId, RouteStart, Schedule};
use crate::roadnet::{Millis, RoadNetwork};
use crate::spatial::GridIndex;

/// Default angle threshold: pairs whose destinations diverge by more than a
/// right angle (seen from the second pickup) are pruned.
pub const DEFAULT_ANGLE: f64 = PI;

#[derive(Debug, Error, PartialEq)]
pub enum ShareError {
    #[error("group is empty")]
    EmptyGroup,
    #[error("request {0} is not in the graph")]
    UnknownRequest(RequestId),
    #[error("group is not a clique: {0} and {1} are not adjacent")]
    NotClique(RequestId, RequestId),
    #[error("invalid log-normal fit: {0}")]
    InvalidFit(&'static str),
    #[error("quadrature did not converge (estimated error {achieved:.3e})")]
    Quadrature { achieved: f64 },
}

/// Undirected simple graph on request ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShareabilityGraph {
    adj: BTreeMap<RequestId, BTreeSet<RequestId>>,
}

impl ShareabilityGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, r: RequestId) {
        self.adj.entry(r).or_default();
    }

    /// Adds the undirected edge `a`–`b`, creating missing nodes. Self-loops
    /// are ignored.
    pub fn add_edge(&mut self, a: RequestId, b: RequestId) {
        if a == b {
            return;
        }
        self.adj.entry(a).or_default().insert(b);
        self.adj.entry(b).or_default().insert(a);
    }

    pub fn remove_node(&mut self, r: RequestId) -> bool {
        let Some(nbrs) = self.adj.remove(&r) else {
            return false;
        };
        for n in nbrs {
            if let Some(set) = self.adj.get_mut(&n) {
                set.remove(&r);
            }
        }
        true
    }

    pub fn contains(&self, r: RequestId) -> bool {
        self.adj.contains_key(&r)
    }

    pub fn has_edge(&self, a: RequestId, b: RequestId) -> bool {
        self.adj.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn neighbors(&self, r: RequestId) -> Option<&BTreeSet<RequestId>> {
        self.adj.get(&r)
    }

    /// Degree of `r`; zero for unknown requests.
    pub fn degree(&self, r: RequestId) -> usize {
        self.adj.get(&r).map_or(0, BTreeSet::len)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn nodes(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.adj.keys().copied()
    }

    /// Edges as `(lo, hi)` pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (RequestId, RequestId)> + '_ {
        self.adj.iter().flat_map(|(&a, s)| s.range(a..).map(move |&b| (a, b)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.values().map(BTreeSet::len).collect()
    }

    pub fn is_clique(&self, group: &[RequestId]) -> bool {
        self.check_clique(group).is_ok()
    }

    fn check_clique(&self, group: &[RequestId]) -> Result<(), ShareError> {
        if group.is_empty() {
            return Err(ShareError::EmptyGroup);
        }
        for (x, &a) in group.iter().enumerate() {
            let nbrs = self.adj.get(&a).ok_or(ShareError::UnknownRequest(a))?;
            for &b in &group[x + 1..] {
                if !nbrs.contains(&b) {
                    return Err(ShareError::NotClique(a, b));
                }
            }
        }
        Ok(())
    }

    fn common_neighbors<'g>(&self, members: impl Iterator<Item = &'g RequestId>) -> BTreeSet<RequestId> {
        let mut acc: Option<BTreeSet<RequestId>> = None;
        for m in members {
            let n = &self.adj[m];
            acc = Some(match acc {
                None => n.clone(),
                Some(a) => a.intersection(n).copied().collect(),
            });
        }
        acc.unwrap_or_default()
    }

    /// Checks symmetry and the absence of self-loops.
    pub fn audit(&self) -> Result<(), String> {
        for (&a, nbrs) in &self.adj {
            for &b in nbrs {
                if a == b {
                    return Err(format!("self-loop on {a}"));
                }
                if !self.has_edge(b, a) {
                    return Err(format!("edge {a}-{b} is one-directional"));
                }
            }
        }
        Ok(())
    }
}

/// Edges the graph loses when `group` is served together: the worst case,
/// over members, of first merging the rest of the group and then the
/// member. A singleton loses its degree.
pub fn shareability_loss(graph: &ShareabilityGraph, group: &[RequestId]) -> Result<usize, ShareError> {
    graph.check_clique(group)?;
    if let [r] = group {
        return Ok(graph.degree(*r));
    }
    let common_all = graph.common_neighbors(group.iter()).len();
    let loss = group
        .iter()
        .map(|r| {
            let common_rest = graph.common_neighbors(group.iter().filter(|v| *v != r)).len();
            common_rest + graph.degree(*r) - common_all - 1
        })
        .max()
        .unwrap_or(0);
    Ok(loss)
}

/// Replaces the clique `group` by a single node `label` adjacent to every
/// request that all members share.
pub fn substitute_supernode(
    graph: &ShareabilityGraph,
    group: &[RequestId],
    label: RequestId,
) -> Result<ShareabilityGraph, ShareError> {
    graph.check_clique(group)?;
    let members: BTreeSet<RequestId> = group.iter().copied().collect();
    let mut nbrs = graph.common_neighbors(group.iter());
    nbrs.retain(|n| !members.contains(n));
    let mut out = graph.clone();
    for m in &members {
        out.remove_node(*m);
    }
    out.add_node(label);
    for n in nbrs {
        out.add_edge(label, n);
    }
    Ok(out)
}

/// True when the pair should be skipped: the destinations of `a` and `b`
/// diverge, as seen from `b`'s source, by more than `delta / 2`.
pub fn angle_pruned(net: &RoadNetwork, a: &Request, b: &Request, delta: f64) -> bool {
    let o = net.xy(b.source);
    let ea = net.xy(a.destination);
    let eb = net.xy(b.destination);
    let u = [ea[0] - o[0], ea[1] - o[1]];
    let v = [eb[0] - o[0], eb[1] - o[1]];
    let nu = u[0].hypot(u[1]);
    let nv = v[0].hypot(v[1]);
    if nu == 0.0 || nv == 0.0 {
        return false;
    }
    let cos = ((u[0] * v[0] + u[1] * v[1]) / (nu * nv)).clamp(-1.0, 1.0);
    cos.acos() > delta / 2.0
}

/// Whether `b` can join `a` in a schedule that starts with `a`'s pickup:
/// a vehicle of `capacity` waits at `a`'s source from the later release.
pub fn shareable_from(planner: &Planner<'_, '_>, a: &Request, b: &Request, capacity: u32) -> bool {
    let start = RouteStart::idle(a.source, a.release.max(b.release), capacity);
    let mut base = Schedule::from_points(vec![a.pickup(), a.dropoff()]);
    if base.recompute_times(start.position, planner.router()).is_err() {
        return false;
    }
    if base.points().iter().any(|p| p.arrive > p.ddl) || a.riders > capacity {
        return false;
    }
    let mut found = false;
    planner.for_each_placement(&start, &base, b, |i, _, _| found |= i >= 1);
    found
}

/// Symmetric shareability: either request may be picked up first.
pub fn is_shareable(planner: &Planner<'_, '_>, a: &Request, b: &Request, capacity: u32) -> bool {
    shareable_from(planner, a, b, capacity) || shareable_from(planner, b, a, capacity)
}

/// Counters from one graph update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct GraphStats {
    /// Pairs returned by the grid range query.
    pub candidates: u64,
    /// Pairs rejected by the straight-line reachability bound.
    pub bound_pruned: u64,
    /// Pairs rejected by the angle rule.
    pub angle_pruned: u64,
    /// Pairs checked with insertion.
    pub checked: u64,
    pub edges_added: u64,
    /// Shortest-path cost lookups issued during the update.
    pub path_queries: u64,
}

impl std::ops::AddAssign for GraphStats {
    fn add_assign(&mut self, o: Self) {
        self.candidates += o.candidates;
        self.bound_pruned += o.bound_pruned;
        self.angle_pruned += o.angle_pruned;
        self.checked += o.checked;
        self.edges_added += o.edges_added;
        self.path_queries += o.path_queries;
    }
}

/// Incremental graph maintenance with grid, bound and angle filters.
pub struct GraphBuilder<'a, 'n> {
    planner: Planner<'a, 'n>,
    capacity: u32,
    angle: f64,
    speed_mps: f64,
    grid: GridIndex<RequestId>,
}

impl<'a, 'n> GraphBuilder<'a, 'n> {
    /// `speed_mps` converts time slack into a search radius; `angle` of
    /// `2π` or more disables angle pruning.
    pub fn new(planner: Planner<'a, 'n>, capacity: u32, angle: f64, speed_mps: f64, grid_n: usize) -> Self {
        let grid = GridIndex::build(planner.router().network(), grid_n);
        Self {
            planner,
            capacity,
            angle,
            speed_mps,
            grid,
        }
    }

    /// Adds `batch` (ids present in `live`) to the graph, testing each new
    /// request against everything already indexed.
    pub fn add_batch(
        &mut self,
        graph: &mut ShareabilityGraph,
        live: &BTreeMap<RequestId, Request>,
        batch: &[RequestId],
    ) -> GraphStats {
        let router = self.planner.router();
        let net = router.network();
        let queries_before = router.query_count();
        let mut stats = GraphStats::default();
        let mut order = batch.to_vec();
        order.sort_unstable();
        order.dedup();

        let pickup_slack = |r: &Request| (r.pickup_deadline() - r.release).max(0);
        let mut pool_slack = self
            .grid_members()
            .filter_map(|id| live.get(&id))
            .map(pickup_slack)
            .max()
            .unwrap_or(0);

        for id in order {
            let Some(a) = live.get(&id) else { continue };
            if graph.contains(id) {
                continue;
            }
            graph.add_node(id);
            let radius_s = pickup_slack(a).max(pool_slack) as f64 / 1000.0;
            for other in self.grid.range_query(a.source, radius_s, self.speed_mps) {
                let Some(b) = live.get(&other) else { continue };
                stats.candidates += 1;
                if !self.within_reach(net, a, b) {
                    stats.bound_pruned += 1;
                    continue;
                }
                if angle_pruned(net, a, b, self.angle) {
                    stats.angle_pruned += 1;
                    continue;
                }
                stats.checked += 1;
                if is_shareable(&self.planner, a, b, self.capacity) {
                    graph.add_edge(id, other);
                    stats.edges_added += 1;
                }
            }
            self.grid
                .update_member(id, a.source)
                .expect("request source is a network node");
            pool_slack = pool_slack.max(pickup_slack(a));
        }
        stats.path_queries = router.query_count() - queries_before;
        stats
    }

    /// Drops a served or expired request from graph and index.
    pub fn remove(&mut self, graph: &mut ShareabilityGraph, id: RequestId) {
        graph.remove_node(id);
        self.grid.remove(&id);
    }

    fn grid_members(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.grid.members().copied()
    }

    /// Straight-line lower bound: one pickup must be reachable from the
    /// other before its pickup deadline.
    fn within_reach(&self, net: &RoadNetwork, a: &Request, b: &Request) -> bool {
        let t0 = a.release.max(b.release);
        let lb = (net.euclidean_m(a.source, b.source) / self.speed_mps * 1000.0).floor() as Millis;
        t0 + lb <= b.pickup_deadline() || t0 + lb <= a.pickup_deadline()
    }
}

/// Every pair tested with [`is_shareable`], no filters.
pub fn brute_force_graph(planner: &Planner<'_, '_>, requests: &[&Request], capacity: u32) -> ShareabilityGraph {
    let mut g = ShareabilityGraph::new();
    for (x, a) in requests.iter().enumerate() {
        g.add_node(a.id);
        for b in &requests[x + 1..] {
            if is_shareable(planner, a, b, capacity) {
                g.add_edge(a.id, b.id);
            }
        }
    }
    g
}

/// Upper bound on the number of cliques needed to cover a graph with `n`
/// nodes and `e` edges.
pub fn clique_partition_upper(n: u64, e: u64) -> u64 {
    let d = (4 * n * n + 1).saturating_sub(4 * n + 8 * e);
    d.isqrt().div_ceil(2)
}

/// Clique-number estimate of a power-law graph with exponent `eta`.
pub fn power_law_clique_number(n: u64, eta: f64) -> f64 {
    if eta >= 2.0 {
        return 3.0;
    }
    let nf = n as f64;
    let w = nf.powf(1.0 - eta / 2.0) * nf.ln().powf(-eta / 2.0);
    if w.is_finite() {
        w.clamp(1.0, nf.max(1.0))
    } else {
        nf.max(1.0)
    }
}

/// Partition bound when each clique must also fit in a vehicle of
/// capacity `k`.
pub fn capped_partition_upper(n: u64, e: u64, eta: f64, k: u32) -> u64 {
    let omega = power_law_clique_number(n, eta);
    let mult = (omega / k.max(1) as f64).ceil() as u64;
    clique_partition_upper(n, e) * mult.max(1)
}

/// Hill estimate of the power-law exponent of a degree sequence, using the
/// top `sqrt(m)` of the `m` positive degrees. `None` without enough spread.
pub fn hill_exponent(degrees: &[usize]) -> Option<f64> {
    let mut d: Vec<f64> = degrees.iter().filter(|&&x| x > 0).map(|&x| x as f64).collect();
    if d.len() < 3 {
        return None;
    }
    d.sort_by(|a, b| b.total_cmp(a));
    let k = ((d.len() as f64).sqrt().round() as usize).clamp(2, d.len() - 1);
    let threshold = d[k];
    let s: f64 = d[..k].iter().map(|x| (x / threshold).ln()).sum();
    (s > 0.0).then(|| 1.0 + k as f64 / s)
}

/// Log-normal trip-cost distribution with detour ratio `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl LogNormalFit {
    pub fn new(mu: f64, sigma: f64, gamma: f64) -> Result<Self, ShareError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ShareError::InvalidFit("sigma must be positive"));
        }
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(ShareError::InvalidFit("gamma must exceed 1"));
        }
        if !mu.is_finite() {
            return Err(ShareError::InvalidFit("mu must be finite"));
        }
        Ok(Self { mu, sigma, gamma })
    }

    /// Maximum-likelihood fit of positive samples.
    pub fn fit(samples: &[f64], gamma: f64) -> Result<Self, ShareError> {
        let logs: Vec<f64> = samples.iter().filter(|&&x| x > 0.0).map(|x| x.ln()).collect();
        if logs.len() < 2 {
            return Err(ShareError::InvalidFit("need at least two positive samples"));
        }
        let n = logs.len() as f64;
        let mu = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n;
        Self::new(mu, var.sqrt(), gamma)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let z = (x.ln() - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (x * self.sigma * (2.0 * PI).sqrt())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        0.5 * (1.0 + erf((x.ln() - self.mu) / (self.sigma * std::f64::consts::SQRT_2)))
    }

    /// Below this trip length a partner always fits (`c` is half the first
    /// trip length).
    pub fn lower_bound(&self, c: f64, theta: f64) -> f64 {
        let (s, co) = (theta / 2.0).sin_cos();
        c / (co * co / self.gamma + s * s / (self.gamma - 1.0))
    }

    /// Above this trip length a partner always fits.
    pub fn upper_bound(&self, c: f64, theta: f64) -> f64 {
        2.0 * c * (1.0 - theta.cos()) / (self.gamma - 1.0)
    }

    /// Probability that two independent trips fall in a guaranteed-sharable
    /// length band when their directions diverge by `delta`.
    pub fn expected_sharing_probability(&self, delta: f64) -> Result<f64, ShareError> {
        const TOL: f64 = 1e-4;
        let integrand = |u: f64| {
            let z = (u - self.mu) / self.sigma;
            let weight = (-0.5 * z * z).exp() / (self.sigma * (2.0 * PI).sqrt());
            let c = u.exp() / 2.0;
            let g = self.lower_bound(c, delta);
            let h = self.upper_bound(c, delta);
            let p = if g >= h { 1.0 } else { self.cdf(g) + (1.0 - self.cdf(h)) };
            weight * p
        };
        let lo = self.mu - 12.0 * self.sigma;
        let hi = self.mu + 12.0 * self.sigma;
        let v = adaptive_simpson(&integrand, lo, hi, TOL, 50)?;
        Ok(v.clamp(0.0, 1.0))
    }
}

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64, ShareError> {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        worst: &mut f64,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let err = (left + right - whole) / 15.0;
        if depth == 0 || err.abs() <= tol {
            if err.abs() > tol {
                *worst = worst.max(err.abs());
            }
            return left + right + err;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, worst)
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, worst)
    }

    // start from 16 panels so narrow peaks are not missed
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    let mut worst = 0.0;
    let v = (0..PANELS)
        .map(|i| {
            let (x0, x1) = (a + h * i as f64, a + h * (i + 1) as f64);
            let (f0, f1, fmid) = (f(x0), f(x1), f(0.5 * (x0 + x1)));
            let w = h / 6.0 * (f0 + 4.0 * fmid + f1);
            step(f, x0, x1, f0, fmid, f1, w, tol / PANELS as f64, max_depth, &mut worst)
        })
        .sum::<f64>();
    if worst > tol || !v.is_finite() {
        return Err(ShareError::Quadrature { achieved: worst });
    }
    Ok(v)
}
