//! Constant-time lowest common ancestor via an Euler tour and a sparse
//! table of range minima over tour depths.

use crate::hierarchy::{Hierarchy, LeafId, NodeId};

#[derive(Debug, Clone)]
pub struct LcaIndex {
    tour: Vec<u32>,
    first: Vec<u32>,
    depth: Vec<u32>,
    // table[k][i] = tour index of the shallowest node in tour[i .. i + 2^k]
    table: Vec<Vec<u32>>,
    leftmost: Vec<LeafId>,
    rightmost: Vec<LeafId>,
}

impl LcaIndex {
    pub fn new(h: &Hierarchy) -> Self {
        let m = h.n_nodes();
        let mut tour = Vec::with_capacity(2 * m - 1);
        let mut first = vec![0u32; m];
        // (node, next child slot)
        let mut stack = vec![(h.root(), 0u8)];
        while let Some(&mut (v, ref mut slot)) = stack.last_mut() {
            if *slot == 0 {
                first[v] = tour.len() as u32;
            }
            tour.push(v as u32);
            match h.children(v) {
                Some(c) if *slot < 2 => {
                    let next = c[*slot as usize];
                    *slot += 1;
                    stack.push((next, 0));
                }
                _ => {
                    stack.pop();
                }
            }
        }
        let depth: Vec<u32> = (0..m).map(|v| h.depth(v) as u32).collect();

        let len = tour.len();
        let mut table = vec![(0..len as u32).collect::<Vec<u32>>()];
        let mut k = 1;
        while (1 << k) <= len {
            let prev = &table[k - 1];
            let half = 1 << (k - 1);
            let row: Vec<u32> = (0..=len - (1 << k))
                .map(|i| {
                    let (a, b) = (prev[i], prev[i + half]);
                    if depth[tour[a as usize] as usize] <= depth[tour[b as usize] as usize] {
                        a
                    } else {
                        b
                    }
                })
                .collect();
            table.push(row);
            k += 1;
        }

        let mut leftmost = vec![0; m];
        let mut rightmost = vec![0; m];
        for v in 0..m {
            let leaves = h.leaves_under(v);
            leftmost[v] = leaves[0];
            rightmost[v] = leaves[leaves.len() - 1];
        }
        Self { tour, first, depth, table, leftmost, rightmost }
    }

    pub fn lca(&self, a: NodeId, b: NodeId) -> NodeId {
        let (mut i, mut j) = (self.first[a] as usize, self.first[b] as usize);
        if i > j {
            std::mem::swap(&mut i, &mut j);
        }
        let k = (usize::BITS - 1 - (j - i + 1).leading_zeros()) as usize;
        let x = self.table[k][i];
        let y = self.table[k][j + 1 - (1 << k)];
        let (vx, vy) = (self.tour[x as usize] as usize, self.tour[y as usize] as usize);
        if self.depth[vx] <= self.depth[vy] {
            vx
        } else {
            vy
        }
    }

    pub fn leftmost_leaf(&self, v: NodeId) -> LeafId {
        self.leftmost[v]
    }

    pub fn rightmost_leaf(&self, v: NodeId) -> LeafId {
        self.rightmost[v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cherry() {
        let h = Hierarchy::from_parents(&[Some(2), Some(2), None], vec![]).unwrap();
        let idx = LcaIndex::new(&h);
        assert_eq!(idx.lca(0, 1), 2);
        assert_eq!(idx.lca(1, 1), 1);
        assert_eq!(idx.lca(2, 0), 2);
        assert_eq!(idx.leftmost_leaf(2), 0);
        assert_eq!(idx.rightmost_leaf(2), 1);
    }
}
