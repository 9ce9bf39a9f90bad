//! Level-wise enumeration of request groups a vehicle can serve together.

use std::collections::{BTreeMap, HashSet};

use crate::insertion::Planner;
use crate::model::{Request, RequestId, RouteStart, Schedule};
use crate::roadnet::Millis;
use crate::shareability::ShareabilityGraph;

/// A group of requests with the schedule that serves them on top of the
/// vehicle's existing way-points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    /// Member ids, ascending.
    pub members: Vec<RequestId>,
    pub schedule: Schedule,
    pub cost: Millis,
    /// Member inserted last, into the schedule of `members` without it.
    pub last: RequestId,
}

impl Group {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn parent_key(&self) -> Vec<RequestId> {
        self.members.iter().copied().filter(|&r| r != self.last).collect()
    }
}

/// Groups by size: `levels[l - 1]` holds the groups of `l` requests.
#[derive(Debug, Clone, Default)]
pub struct GroupingLevels {
    pub levels: Vec<Vec<Group>>,
}

impl GroupingLevels {
    pub fn level(&self, size: usize) -> &[Group] {
        size.checked_sub(1)
            .and_then(|i| self.levels.get(i))
            .map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Group> {
        self.levels.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, members: &[RequestId]) -> Option<&Group> {
        self.level(members.len()).iter().find(|g| g.members == members)
    }
}

/// Enumerates every group of `pool` that is a clique of `graph`, whose
/// subsets are all valid, whose riders fit `start.capacity`, and that can
/// be inserted on top of `base`. A group's schedule inserts its
/// highest-degree member (ties: higher id) into the schedule of the rest.
pub fn build_groups(
    planner: &Planner<'_, '_>,
    start: &RouteStart,
    base: &Schedule,
    pool: &[&Request],
    graph: &ShareabilityGraph,
) -> GroupingLevels {
    let mut requests: Vec<&Request> = pool.to_vec();
    requests.sort_by_key(|r| r.id);
    requests.dedup_by_key(|r| r.id);
    let by_id: BTreeMap<RequestId, &Request> = requests.iter().map(|r| (r.id, *r)).collect();

    let mut levels: Vec<Vec<Group>> = Vec::new();
    let first: Vec<Group> = requests
        .iter()
        .filter_map(|r| {
            let ins = planner.insert_request(start, base, r)?;
            let cost = planner.cost(&ins.schedule, start);
            Some(Group {
                members: vec![r.id],
                schedule: ins.schedule,
                cost,
                last: r.id,
            })
        })
        .collect();
    levels.push(first);

    let max_level = start.capacity as usize;
    for size in 2..=max_level {
        let prev = levels.last().expect("level one exists");
        if prev.len() < 2 {
            break;
        }
        let index: BTreeMap<&[RequestId], usize> = prev
            .iter()
            .enumerate()
            .map(|(i, g)| (g.members.as_slice(), i))
            .collect();
        let mut seen: HashSet<Vec<RequestId>> = HashSet::new();
        let mut next = Vec::new();
        for x in 0..prev.len() {
            for y in x + 1..prev.len() {
                let union = merge(&prev[x].members, &prev[y].members);
                if union.len() != size || !seen.insert(union.clone()) {
                    continue;
                }
                let all_subsets = (0..size).all(|skip| {
                    let sub: Vec<RequestId> = without(&union, skip);
                    index.contains_key(sub.as_slice())
                });
                if !all_subsets || !is_clique(graph, &union) {
                    continue;
                }
                let riders: u32 = union.iter().map(|r| by_id[r].riders).sum();
                if riders > start.capacity {
                    continue;
                }
                let newest = *union
                    .iter()
                    .max_by_key(|&&r| (graph.degree(r), r))
                    .expect("non-empty group");
                let parent_key: Vec<RequestId> = union.iter().copied().filter(|&r| r != newest).collect();
                let parent = &prev[index[parent_key.as_slice()]];
                if let Some(ins) = planner.insert_request(start, &parent.schedule, by_id[&newest]) {
                    let cost = planner.cost(&ins.schedule, start);
                    next.push(Group {
                        members: union,
                        schedule: ins.schedule,
                        cost,
                        last: newest,
                    });
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_by(|a, b| a.members.cmp(&b.members));
        levels.push(next);
    }
    GroupingLevels { levels }
}

fn merge(a: &[RequestId], b: &[RequestId]) -> Vec<RequestId> {
    let mut out: Vec<RequestId> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn without(v: &[RequestId], skip: usize) -> Vec<RequestId> {
    v.iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &r)| r)
        .collect()
}

fn is_clique(graph: &ShareabilityGraph, members: &[RequestId]) -> bool {
    members
        .iter()
        .enumerate()
        .all(|(i, &a)| members[i + 1..].iter().all(|&b| graph.has_edge(a, b)))
}
