//! Uniform `n×n` grid over the network bounding box.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use thiserror::Error;

use crate::roadnet::{NodeId, RoadNetwork};

pub const DEFAULT_GRID_N: usize = 128;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpatialError {
    #[error("node {0} is not part of the indexed network")]
    UnknownNode(NodeId),
}

/// Grid buckets of members keyed by the node they currently sit on.
#[derive(Debug, Clone)]
pub struct GridIndex<K> {
    n: usize,
    min: [f64; 2],
    cell_size: [f64; 2],
    node_xy: Vec<[f64; 2]>,
    node_cell: Vec<u32>,
    cells: Vec<BTreeSet<K>>,
    member_cell: HashMap<K, u32>,
}

impl<K: Copy + Ord + Hash> GridIndex<K> {
    /// Empty grid over the bounding box of every node coordinate.
    pub fn build(net: &RoadNetwork, n: usize) -> Self {
        let n = n.max(1);
        let node_xy: Vec<[f64; 2]> = (0..net.node_count() as NodeId).map(|v| net.xy(v)).collect();
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in &node_xy {
            for a in 0..2 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        let cell_size = [0, 1].map(|a| {
            let span = max[a] - min[a];
            if span > 0.0 {
                span / n as f64
            } else {
                1.0
            }
        });
        let mut grid = Self {
            n,
            min,
            cell_size,
            node_xy,
            node_cell: Vec::new(),
            cells: vec![BTreeSet::new(); n * n],
            member_cell: HashMap::new(),
        };
        grid.node_cell = grid
            .node_xy
            .iter()
            .map(|&p| {
                let (cx, cy) = grid.cell_coords(p);
                (cy * n + cx) as u32
            })
            .collect();
        grid
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.member_cell.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_cell.is_empty()
    }

    fn axis_cell(&self, a: usize, v: f64) -> usize {
        let c = ((v - self.min[a]) / self.cell_size[a]).floor();
        if c <= 0.0 {
            0
        } else {
            (c as usize).min(self.n - 1)
        }
    }

    /// `(column, row)` of a planar point, clamped to the grid.
    pub fn cell_coords(&self, p: [f64; 2]) -> (usize, usize) {
        (self.axis_cell(0, p[0]), self.axis_cell(1, p[1]))
    }

    pub fn node_cell(&self, node: NodeId) -> Option<(usize, usize)> {
        self.node_cell
            .get(node as usize)
            .map(|&c| (c as usize % self.n, c as usize / self.n))
    }

    pub fn member_cell(&self, member: &K) -> Option<(usize, usize)> {
        self.member_cell
            .get(member)
            .map(|&c| (c as usize % self.n, c as usize / self.n))
    }

    pub fn members(&self) -> impl Iterator<Item = &K> + '_ {
        self.member_cell.keys()
    }

    /// Inserts or moves `member` to the cell of `node`.
    pub fn update_member(&mut self, member: K, node: NodeId) -> Result<(), SpatialError> {
        let &cell = self
            .node_cell
            .get(node as usize)
            .ok_or(SpatialError::UnknownNode(node))?;
        if let Some(old) = self.member_cell.insert(member, cell) {
            if old == cell {
                return Ok(());
            }
            self.cells[old as usize].remove(&member);
        }
        self.cells[cell as usize].insert(member);
        Ok(())
    }

    pub fn remove(&mut self, member: &K) -> bool {
        match self.member_cell.remove(member) {
            Some(cell) => {
                self.cells[cell as usize].remove(member);
                true
            }
            None => false,
        }
    }

    /// Members inside the bounding rectangle of a circle around `center`.
    ///
    /// `radius_s` is a travel time converted to metres with `speed_mps`.
    /// The result is a superset of members within the straight-line radius,
    /// sorted ascending.
    pub fn range_query(&self, center: NodeId, radius_s: f64, speed_mps: f64) -> Vec<K> {
        let Some(&p) = self.node_xy.get(center as usize) else {
            return Vec::new();
        };
        self.range_query_point(p, (radius_s * speed_mps).max(0.0))
    }

    pub fn range_query_point(&self, p: [f64; 2], radius_m: f64) -> Vec<K> {
        let (x0, y0) = self.cell_coords([p[0] - radius_m, p[1] - radius_m]);
        let (x1, y1) = self.cell_coords([p[0] + radius_m, p[1] + radius_m]);
        let mut out = Vec::new();
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                out.extend(self.cells[cy * self.n + cx].iter().copied());
            }
        }
        out.sort_unstable();
        out
    }

    /// Checks bucket/back-map consistency: every member in exactly one
    /// bucket and that bucket matches the back-map.
    pub fn audit(&self) -> Result<(), String> {
        let mut seen = 0usize;
        for (cell, bucket) in self.cells.iter().enumerate() {
            for m in bucket {
                seen += 1;
                match self.member_cell.get(m) {
                    Some(&c) if c as usize == cell => {}
                    other => return Err(format!("bucket {cell} holds member mapped to {other:?}")),
                }
            }
        }
        if seen != self.member_cell.len() {
            return Err(format!(
                "{} members indexed but {seen} bucket entries",
                self.member_cell.len()
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::tests::line4;
    use proptest::prelude::*;

    fn unit_square() -> RoadNetwork {
        let coords = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.9, 0.9)];
        RoadNetwork::from_parts(coords, &[]).unwrap()
    }

    #[test]
    fn single_cell_holds_everything() {
        let net = line4();
        let mut g = GridIndex::build(&net, 1);
        for v in 0..4 {
            g.update_member(v, v).unwrap();
        }
        assert_eq!(g.range_query(0, 0.0, 1.0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn corner_point_lands_in_last_cell() {
        let net = unit_square();
        let mut g = GridIndex::<u32>::build(&net, 2);
        g.update_member(7, 4).unwrap();
        assert_eq!(g.member_cell(&7), Some((1, 1)));
        assert_eq!(g.node_cell(0), Some((0, 0)));
        assert_eq!(g.node_cell(3), Some((1, 1)));
    }

    #[test]
    fn line4_populates_four_columns() {
        let net = line4();
        let mut g = GridIndex::build(&net, 4);
        for v in 0..4u32 {
            g.update_member(v, v).unwrap();
        }
        let cols: BTreeSet<usize> = (0..4).map(|v| g.member_cell(&v).unwrap().0).collect();
        assert_eq!(cols.len(), 4);
        assert_eq!(g.cells.len(), 16);
    }

    #[test]
    fn update_is_idempotent_and_moves_cleanly() {
        let net = line4();
        let mut g = GridIndex::build(&net, 4);
        g.update_member(1u32, 0).unwrap();
        g.update_member(1u32, 0).unwrap();
        assert_eq!(g.cells.iter().map(BTreeSet::len).sum::<usize>(), 1);
        g.update_member(1u32, 3).unwrap();
        assert!(g.range_query(0, 0.0, 1.0).is_empty());
        assert_eq!(g.range_query(3, 0.0, 1.0), vec![1]);
        assert_eq!(g.update_member(1u32, 9), Err(SpatialError::UnknownNode(9)));
        g.audit().unwrap();
    }

    #[test]
    fn radius_zero_is_center_cell() {
        let net = line4();
        let mut g = GridIndex::build(&net, 4);
        for v in 0..4u32 {
            g.update_member(v, v).unwrap();
            g.update_member(10 + v, v).unwrap();
        }
        assert_eq!(g.range_query(2, 0.0, 1.0), vec![2, 12]);
    }

    #[test]
    fn line4_radius_covering_a_and_b() {
        let net = line4();
        let mut g = GridIndex::build(&net, 4);
        for v in 0..4u32 {
            g.update_member(v, v).unwrap();
        }
        // one edge is 10 s; speed proxy = edge length / 10 s
        let speed = net.euclidean_m(0, 1) / 10.0;
        assert_eq!(g.range_query(0, 10.0, speed), vec![0, 1]);
        // spanning the whole box returns everything
        assert_eq!(g.range_query(0, 1e6, speed), vec![0, 1, 2, 3]);
    }

    fn grid_net(side: usize) -> RoadNetwork {
        let coords = (0..side * side)
            .map(|i| ((i % side) as f64 * 0.003, (i / side) as f64 * 0.002))
            .collect();
        RoadNetwork::from_parts(coords, &[]).unwrap()
    }

    proptest! {
        #[test]
        fn random_moves_keep_index_consistent(
            moves in prop::collection::vec((0u32..40, 0u32..100), 1..1000),
            n in 1usize..12,
        ) {
            let net = grid_net(10);
            let mut g = GridIndex::build(&net, n);
            for (m, node) in moves {
                g.update_member(m, node).unwrap();
                prop_assert_eq!(g.member_cell(&m), g.node_cell(node));
            }
            prop_assert!(g.audit().is_ok());
        }

        #[test]
        fn range_query_is_superset_of_scan(
            members in prop::collection::vec(0u32..100, 1..60),
            center in 0u32..100,
            radius_m in 0.0f64..900.0,
            n in 1usize..20,
        ) {
            let net = grid_net(10);
            let mut g = GridIndex::build(&net, n);
            for (i, &node) in members.iter().enumerate() {
                g.update_member(i as u32, node).unwrap();
            }
            let got: BTreeSet<u32> = g.range_query(center, radius_m, 1.0).into_iter().collect();
            for (i, &node) in members.iter().enumerate() {
                if net.euclidean_m(center, node) <= radius_m {
                    prop_assert!(got.contains(&(i as u32)));
                }
            }
        }
    }
}
