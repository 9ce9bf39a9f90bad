//! Linear insertion into schedules, degree-ordered group schedules and an
//! exhaustive reference search.

use crate::model::{Request, RouteStart, Schedule, StopKind, WayPoint};
use crate::roadnet::{Millis, Router};

/// Result of placing one request into a schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insertion {
    pub schedule: Schedule,
    /// Increase in schedule cost.
    pub delta: Millis,
    /// The pickup is placed before old way-point `pickup_at`.
    pub pickup_at: usize,
    /// The drop-off is placed before old way-point `dropoff_at`
    /// (`pickup_at <= dropoff_at`).
    pub dropoff_at: usize,
}

/// Schedule construction over a shared cost oracle.
#[derive(Clone, Copy)]
pub struct Planner<'a, 'n> {
    router: &'a Router<'n>,
    include_deadhead: bool,
}

impl<'a, 'n> Planner<'a, 'n> {
    pub fn new(router: &'a Router<'n>, include_deadhead: bool) -> Self {
        Self {
            router,
            include_deadhead,
        }
    }

    pub fn router(&self) -> &'a Router<'n> {
        self.router
    }

    pub fn includes_deadhead(&self) -> bool {
        self.include_deadhead
    }

    pub fn cost(&self, schedule: &Schedule, start: &RouteStart) -> Millis {
        schedule.cost(start.position, self.include_deadhead)
    }

    /// Visits every feasible `(pickup_at, dropoff_at, delta)` placement of
    /// `req` into `schedule` that keeps the existing way-point order.
    ///
    /// `schedule` must carry fresh arrival and buffer times for `start`.
    pub fn for_each_placement(
        &self,
        start: &RouteStart,
        schedule: &Schedule,
        req: &Request,
        mut visit: impl FnMut(usize, usize, Millis),
    ) {
        let pts = schedule.points();
        let k = pts.len();
        let cap = start.capacity as i64;
        let riders = req.riders as i64;

        // load on board after the first `i` way-points
        let mut load_after = Vec::with_capacity(k + 1);
        let mut load = start.onboard as i64;
        load_after.push(load);
        for p in pts {
            load += p.load_delta();
            load_after.push(load);
        }
        // tightest deadline slack from way-point x onwards
        let tail: Vec<Millis> = pts.iter().map(|p| p.slack().min(p.buf)).collect();

        let origin = start.position;
        let old_last = pts.last().map_or(origin.time, |p| p.arrive);
        let old_total = self.cost(schedule, start);
        let total = |first: Millis, last: Millis| {
            if self.include_deadhead {
                last - origin.time
            } else {
                last - first
            }
        };

        for i in 0..=k {
            if load_after[i] + riders > cap {
                continue;
            }
            let (prev_node, prev_time) = match i {
                0 => (origin.node, origin.time),
                _ => (pts[i - 1].node, pts[i - 1].arrive),
            };
            let Some(to_source) = self.router.cost(prev_node, req.source) else {
                continue;
            };
            let at_source = prev_time + to_source;
            if at_source > req.pickup_deadline() {
                continue;
            }
            let first = if i == 0 { at_source } else { pts[0].arrive };

            // drop-off directly after the pickup
            let at_dest = at_source + req.trip_cost;
            if at_dest <= req.deadline {
                if i == k {
                    visit(i, i, total(first, at_dest) - old_total);
                } else if let Some(back) = self.router.cost(req.destination, pts[i].node) {
                    let detour = at_dest + back - pts[i].arrive;
                    if detour <= tail[i] {
                        visit(i, i, total(first, old_last + detour) - old_total);
                    }
                }
            }
            if i == k {
                continue;
            }

            let Some(source_to_next) = self.router.cost(req.source, pts[i].node) else {
                continue;
            };
            let detour = at_source + source_to_next - pts[i].arrive;
            // the drop-off detour is never smaller than the pickup detour
            if detour > tail[i] {
                continue;
            }
            for j in i + 1..=k {
                let p = &pts[j - 1];
                if p.arrive + detour > p.ddl || load_after[j] + riders > cap {
                    break;
                }
                let Some(to_dest) = self.router.cost(p.node, req.destination) else {
                    continue;
                };
                let at_dest = p.arrive + detour + to_dest;
                if at_dest > req.deadline {
                    continue;
                }
                if j == k {
                    visit(i, j, total(first, at_dest) - old_total);
                    continue;
                }
                let Some(back) = self.router.cost(req.destination, pts[j].node) else {
                    continue;
                };
                let detour2 = at_dest + back - pts[j].arrive;
                if detour2 <= tail[j] {
                    visit(i, j, total(first, old_last + detour2) - old_total);
                }
            }
        }
    }

    /// Cheapest order-preserving insertion of `req`, or `None` if no
    /// placement is feasible. Ties keep the earliest placement.
    pub fn insert_request(&self, start: &RouteStart, schedule: &Schedule, req: &Request) -> Option<Insertion> {
        let mut best: Option<(usize, usize, Millis)> = None;
        self.for_each_placement(start, schedule, req, |i, j, delta| {
            if best.is_none_or(|(_, _, b)| delta < b) {
                best = Some((i, j, delta));
            }
        });
        let (i, j, delta) = best?;
        Some(Insertion {
            schedule: self.place(start, schedule, req, i, j),
            delta,
            pickup_at: i,
            dropoff_at: j,
        })
    }

    /// Materializes a placement found by [`Planner::for_each_placement`].
    pub fn place(
        &self,
        start: &RouteStart,
        schedule: &Schedule,
        req: &Request,
        pickup_at: usize,
        dropoff_at: usize,
    ) -> Schedule {
        let old = schedule.points();
        let mut pts = Vec::with_capacity(old.len() + 2);
        pts.extend_from_slice(&old[..pickup_at]);
        pts.push(req.pickup());
        pts.extend_from_slice(&old[pickup_at..dropoff_at]);
        pts.push(req.dropoff());
        pts.extend_from_slice(&old[dropoff_at..]);
        let mut out = Schedule::from_points(pts);
        out.recompute_times(start.position, self.router)
            .expect("placement legs were reachable");
        out
    }

    /// Schedule for new requests on top of `base`, inserting in ascending
    /// shareability (degree, then id). The two least shareable requests are
    /// placed jointly and optimally; the rest go in one by one. Existing
    /// way-points are never reordered.
    pub fn build_group_schedule(
        &self,
        start: &RouteStart,
        base: &Schedule,
        members: &[(&Request, usize)],
    ) -> Option<Schedule> {
        let mut order = members.to_vec();
        order.sort_by_key(|(r, degree)| (*degree, r.id));
        let mut rest = order.iter().map(|(r, _)| *r);
        let (Some(a), second) = (rest.next(), rest.next()) else {
            return Some(base.clone());
        };
        let mut schedule = match second {
            None => return self.insert_request(start, base, a).map(|ins| ins.schedule),
            Some(b) => self.best_pair(start, base, a, b)?,
        };
        for r in rest {
            schedule = self.insert_request(start, &schedule, r)?.schedule;
        }
        Some(schedule)
    }

    /// Optimal joint placement of two requests into `base`: every feasible
    /// placement of `a`, each followed by the best placement of `b`.
    fn best_pair(&self, start: &RouteStart, base: &Schedule, a: &Request, b: &Request) -> Option<Schedule> {
        let mut placements = Vec::new();
        self.for_each_placement(start, base, a, |i, j, _| placements.push((i, j)));
        let mut best: Option<(Millis, Schedule)> = None;
        for (i, j) in placements {
            let with_a = self.place(start, base, a, i, j);
            if let Some(ins) = self.insert_request(start, &with_a, b) {
                let cost = self.cost(&ins.schedule, start);
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, ins.schedule));
                }
            }
        }
        best.map(|(_, s)| s)
    }
}

/// Largest request count [`optimal_schedule_oracle`] accepts.
pub const ORACLE_MAX_REQUESTS: usize = 5;

/// Minimum-cost feasible schedule over every ordering of the way-points of
/// `base` and `requests` that respects pickup-before-drop-off.
///
/// Exhaustive; intended as a reference for small instances.
pub fn optimal_schedule_oracle(
    router: &Router<'_>,
    start: &RouteStart,
    base: &Schedule,
    requests: &[&Request],
    include_deadhead: bool,
) -> Option<Schedule> {
    assert!(
        requests.len() <= ORACLE_MAX_REQUESTS,
        "oracle limited to {ORACLE_MAX_REQUESTS} requests"
    );
    let mut points: Vec<WayPoint> = base.points().to_vec();
    for r in requests {
        points.push(r.pickup());
        points.push(r.dropoff());
    }
    // index of the pickup each drop-off waits for
    let needs: Vec<Option<usize>> = points
        .iter()
        .map(|p| match p.kind {
            StopKind::Pickup => None,
            StopKind::Dropoff => points
                .iter()
                .position(|q| q.kind == StopKind::Pickup && q.request == p.request),
        })
        .collect();

    struct Search<'s, 'r> {
        router: &'s Router<'r>,
        points: &'s [WayPoint],
        needs: &'s [Option<usize>],
        capacity: i64,
        used: Vec<bool>,
        order: Vec<usize>,
        best: Option<(Millis, Vec<usize>)>,
    }

    impl Search<'_, '_> {
        fn go(&mut self, node: u32, time: Millis, load: i64, first: Option<Millis>, origin: Millis, deadhead: bool) {
            if self.order.len() == self.points.len() {
                let cost = match first {
                    Some(f) if !deadhead => time - f,
                    Some(_) => time - origin,
                    None => 0,
                };
                if self.best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    self.best = Some((cost, self.order.clone()));
                }
                return;
            }
            for x in 0..self.points.len() {
                if self.used[x] || self.needs[x].is_some_and(|p| !self.used[p]) {
                    continue;
                }
                let p = self.points[x];
                let Some(leg) = self.router.cost(node, p.node) else {
                    continue;
                };
                let arrive = time + leg;
                let load = load + p.load_delta();
                if arrive > p.ddl || load > self.capacity {
                    continue;
                }
                self.used[x] = true;
                self.order.push(x);
                self.go(p.node, arrive, load, first.or(Some(arrive)), origin, deadhead);
                self.order.pop();
                self.used[x] = false;
            }
        }
    }

    let mut search = Search {
        router,
        points: &points,
        needs: &needs,
        capacity: start.capacity as i64,
        used: vec![false; points.len()],
        order: Vec::with_capacity(points.len()),
        best: None,
    };
    let origin = start.position;
    search.go(
        origin.node,
        origin.time,
        start.onboard as i64,
        None,
        origin.time,
        include_deadhead,
    );
    let (_, order) = search.best?;
    let mut schedule = Schedule::from_points(order.into_iter().map(|x| points[x]).collect());
    schedule.recompute_times(origin, router).ok()?;
    Some(schedule)
}
