//! Strongly binary hierarchies, cuts and the flat clusterings they induce.
//!
//! Node ids are dense: leaves are `0..n`, internal nodes `n..2n-1`. Every
//! subtree's leaves occupy a contiguous range of [`Hierarchy::leaf_order`],
//! so `L(i)` is a slice and its size is O(1).

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::path::Path;

pub type NodeId = usize;
pub type LeafId = usize;

#[derive(Debug, Clone)]
pub struct Hierarchy {
    n_leaves: usize,
    root: NodeId,
    height: usize,
    parent: Vec<Option<NodeId>>,
    children: Vec<Option<[NodeId; 2]>>,
    depth: Vec<usize>,
    // leaf_order[span[i].0 .. span[i].1] = L(i)
    leaf_order: Vec<LeafId>,
    span: Vec<(usize, usize)>,
    preorder: Vec<NodeId>,
    payloads: Vec<String>,
    source_ids: Vec<usize>,
}

impl Hierarchy {
    /// Builds a hierarchy from a parent array. Children keep the order in
    /// which they appear in `parents`. Ids are renumbered so leaves come
    /// first; `payloads` is indexed by leaf in ascending original id.
    /// An empty `payloads` defaults to the leaf's original id.
    pub fn from_parents(parents: &[Option<usize>], payloads: Vec<String>) -> Result<Self> {
        let m = parents.len();
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut roots = Vec::new();
        for (v, p) in parents.iter().enumerate() {
            match *p {
                None => roots.push(v),
                Some(p) if p >= m => return Err(Error::BadNodeId(p)),
                Some(p) if p == v => return Err(Error::Cyclic),
                Some(p) => kids[p].push(v),
            }
        }
        if let Some((v, k)) = kids.iter().enumerate().find(|(_, k)| k.len() == 1 || k.len() > 2) {
            return Err(Error::NotBinary { node: v, children: k.len() });
        }
        let children = kids
            .into_iter()
            .map(|k| if k.is_empty() { None } else { Some((k[0], k[1])) })
            .collect::<Vec<_>>();
        match roots.len() {
            0 => return Err(Error::Cyclic),
            1 => {}
            _ => return Err(Error::MultipleRoots(roots)),
        }
        Self::assemble(roots[0], &children, payloads)
    }

    /// Builds a hierarchy from explicit (left, right) children per node.
    pub fn from_children(children: &[Option<(usize, usize)>], payloads: Vec<String>) -> Result<Self> {
        let m = children.len();
        let mut has_parent = vec![false; m];
        for &(l, r) in children.iter().flatten() {
            for c in [l, r] {
                if c >= m {
                    return Err(Error::BadNodeId(c));
                }
                if std::mem::replace(&mut has_parent[c], true) {
                    return Err(Error::MultipleParents(c));
                }
            }
        }
        let roots: Vec<usize> = (0..m).filter(|&v| !has_parent[v]).collect();
        match roots.len() {
            0 => Err(Error::Cyclic),
            1 => Self::assemble(roots[0], children, payloads),
            _ => Err(Error::MultipleRoots(roots)),
        }
    }

    fn assemble(root: usize, children: &[Option<(usize, usize)>], payloads: Vec<String>) -> Result<Self> {
        let m = children.len();
        // reachability; every node has at most one parent, so revisits mean a cycle
        let mut seen = vec![false; m];
        let mut stack = vec![root];
        seen[root] = true;
        let mut reached = 1;
        while let Some(v) = stack.pop() {
            if let Some((l, r)) = children[v] {
                for c in [l, r] {
                    if seen[c] {
                        return Err(Error::Cyclic);
                    }
                    seen[c] = true;
                    reached += 1;
                    stack.push(c);
                }
            }
        }
        if reached < m {
            let lost: Vec<usize> = (0..m).filter(|&v| !seen[v]).collect();
            // with a single parentless node, anything unreachable sits on a cycle
            return Err(if lost.iter().all(|&v| children[v].is_some()) {
                Error::Cyclic
            } else {
                Error::Disconnected(lost)
            });
        }

        let leaves: Vec<usize> = (0..m).filter(|&v| children[v].is_none()).collect();
        let n = leaves.len();
        if n < 2 {
            return Err(Error::TooFewLeaves);
        }
        let mut new_id = vec![0usize; m];
        let mut source_ids = Vec::with_capacity(m);
        for &v in &leaves {
            new_id[v] = source_ids.len();
            source_ids.push(v);
        }
        for v in (0..m).filter(|&v| children[v].is_some()) {
            new_id[v] = source_ids.len();
            source_ids.push(v);
        }
        let mut kids = vec![None; m];
        for v in 0..m {
            if let Some((l, r)) = children[v] {
                kids[new_id[v]] = Some([new_id[l], new_id[r]]);
            }
        }
        let payloads = if payloads.is_empty() {
            leaves.iter().map(|v| v.to_string()).collect()
        } else if payloads.len() != n {
            return Err(Error::PayloadMismatch { expected: n, got: payloads.len() });
        } else {
            payloads
        };
        Ok(Self::index(new_id[root], kids, payloads, source_ids))
    }

    fn index(root: NodeId, children: Vec<Option<[NodeId; 2]>>, payloads: Vec<String>, source_ids: Vec<usize>) -> Self {
        let m = children.len();
        let n_leaves = m.div_ceil(2);
        let mut parent = vec![None; m];
        let mut depth = vec![0usize; m];
        let mut preorder = Vec::with_capacity(m);
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            preorder.push(v);
            if let Some([l, r]) = children[v] {
                parent[l] = Some(v);
                parent[r] = Some(v);
                depth[l] = depth[v] + 1;
                depth[r] = depth[v] + 1;
                // left subtree first in preorder
                stack.push(r);
                stack.push(l);
            }
        }
        let leaf_order: Vec<LeafId> = preorder.iter().copied().filter(|&v| v < n_leaves).collect();
        let mut span = vec![(0, 0); m];
        let mut pos = 0;
        for &v in &preorder {
            if v < n_leaves {
                span[v] = (pos, pos + 1);
                pos += 1;
            }
        }
        for &v in preorder.iter().rev() {
            if let Some([l, r]) = children[v] {
                span[v] = (span[l].0, span[r].1);
            }
        }
        let height = (0..n_leaves).map(|v| depth[v]).max().unwrap_or(0);
        Self { n_leaves, root, height, parent, children, depth, leaf_order, span, preorder, payloads, source_ids }
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn n_nodes(&self) -> usize {
        self.children.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    pub fn children(&self, v: NodeId) -> Option<[NodeId; 2]> {
        self.children[v]
    }

    pub fn left(&self, v: NodeId) -> Option<NodeId> {
        self.children[v].map(|c| c[0])
    }

    pub fn right(&self, v: NodeId) -> Option<NodeId> {
        self.children[v].map(|c| c[1])
    }

    pub fn sibling(&self, v: NodeId) -> Option<NodeId> {
        let [l, r] = self.children[self.parent[v]?]?;
        Some(if l == v { r } else { l })
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        v < self.n_leaves
    }

    pub fn depth(&self, v: NodeId) -> usize {
        self.depth[v]
    }

    pub fn internal_nodes(&self) -> std::ops::Range<NodeId> {
        self.n_leaves..self.n_nodes()
    }

    /// Nodes with every parent before its children.
    pub fn preorder(&self) -> &[NodeId] {
        &self.preorder
    }

    /// Nodes with every child before its parent.
    pub fn postorder(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.preorder.iter().rev().copied()
    }

    pub fn leaf_order(&self) -> &[LeafId] {
        &self.leaf_order
    }

    /// Position range of `L(v)` within [`leaf_order`](Self::leaf_order).
    pub fn span(&self, v: NodeId) -> (usize, usize) {
        self.span[v]
    }

    pub fn leaves_under(&self, v: NodeId) -> &[LeafId] {
        let (a, b) = self.span[v];
        &self.leaf_order[a..b]
    }

    pub fn size(&self, v: NodeId) -> usize {
        let (a, b) = self.span[v];
        b - a
    }

    pub fn is_ancestor(&self, a: NodeId, v: NodeId) -> bool {
        let (sa, ea) = self.span[a];
        let (sv, ev) = self.span[v];
        sa <= sv && ev <= ea && self.depth[a] <= self.depth[v]
    }

    /// Ancestors of `v` from its parent up to the root.
    pub fn ancestors(&self, v: NodeId) -> Ancestors<'_> {
        Ancestors { h: self, cur: self.parent[v] }
    }

    /// All nodes of the subtree rooted at `v`, in preorder.
    pub fn subtree(&self, v: NodeId) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(2 * self.size(v) - 1);
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            out.push(u);
            if let Some([l, r]) = self.children[u] {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    pub fn payload(&self, leaf: LeafId) -> &str {
        &self.payloads[leaf]
    }

    pub fn payloads(&self) -> &[String] {
        &self.payloads
    }

    /// Original id of a node before normalization.
    pub fn source_id(&self, v: NodeId) -> usize {
        self.source_ids[v]
    }

    pub fn parent_array(&self) -> Vec<Option<NodeId>> {
        self.parent.clone()
    }

    /// Checks that `cut` is an antichain whose leaf sets tile `L`.
    pub fn validate_cut(&self, cut: &Cut) -> Result<()> {
        let mut spans = Vec::with_capacity(cut.0.len());
        for &v in &cut.0 {
            if v >= self.n_nodes() {
                return Err(Error::BadNodeId(v));
            }
            spans.push((self.span[v], v));
        }
        spans.sort_unstable();
        let mut pos = 0;
        for ((a, b), v) in spans {
            if a < pos {
                return Err(Error::InvalidCut(format!("node {v} overlaps another member")));
            }
            if a > pos {
                return Err(Error::InvalidCut(format!("leaf {} is not covered", self.leaf_order[pos])));
            }
            pos = b;
        }
        if pos != self.n_leaves {
            return Err(Error::InvalidCut(format!("leaf {} is not covered", self.leaf_order[pos])));
        }
        Ok(())
    }

    pub fn cut_to_clustering(&self, cut: &Cut) -> Result<Clustering> {
        self.validate_cut(cut)?;
        Ok(Clustering::new(cut.0.iter().map(|&v| self.leaves_under(v).to_vec()).collect()))
    }

    /// Per-leaf index of the cut member containing it.
    pub fn cut_membership(&self, cut: &Cut) -> Result<Vec<u32>> {
        self.validate_cut(cut)?;
        let mut m = vec![0u32; self.n_leaves];
        for (k, &v) in cut.0.iter().enumerate() {
            for &x in self.leaves_under(v) {
                m[x] = k as u32;
            }
        }
        Ok(m)
    }

    /// Cut whose members are the top-most nodes selected by `is_member`
    /// along every root-to-leaf path. Leaves count as members when no
    /// ancestor is.
    pub fn cut_from_predicate(&self, mut is_member: impl FnMut(NodeId) -> bool) -> Cut {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            match self.children[v] {
                Some([l, r]) if !is_member(v) => {
                    stack.push(r);
                    stack.push(l);
                }
                _ => out.push(v),
            }
        }
        Cut::new(out)
    }

    /// The cut made of all internal nodes at depth `d` plus shallower leaves.
    pub fn cut_at_depth(&self, d: usize) -> Cut {
        self.cut_from_predicate(|v| self.depth[v] >= d)
    }

    /// Uniform leaf pair from `L(left(i)) x L(right(i))`.
    pub fn sample_node_query<R: Rng + ?Sized>(&self, i: NodeId, rng: &mut R) -> Result<(LeafId, LeafId)> {
        let [l, r] = self.children[i].ok_or(Error::LeafNode(i))?;
        let a = self.leaves_under(l)[rng.gen_range(0..self.size(l))];
        let b = self.leaves_under(r)[rng.gen_range(0..self.size(r))];
        Ok((a, b))
    }

    /// The `k`-th pair of `L(left(i)) x L(right(i))` in row-major order.
    pub fn node_pair(&self, i: NodeId, k: usize) -> (LeafId, LeafId) {
        let [l, r] = self.children[i].expect("node_pair on a leaf");
        let w = self.size(r);
        (self.leaves_under(l)[k / w], self.leaves_under(r)[k % w])
    }

    /// Number of leaf pairs split by `i`: `|L(left)| * |L(right)|`.
    pub fn pair_count(&self, i: NodeId) -> u64 {
        match self.children[i] {
            Some([l, r]) => self.size(l) as u64 * self.size(r) as u64,
            None => 0,
        }
    }

    pub fn leaf_depth_stats(&self) -> DepthStats {
        let n = self.n_leaves;
        let sum: u128 = (0..n).map(|v| self.depth[v] as u128).sum();
        let sq: u128 = (0..n).map(|v| (self.depth[v] as u128).pow(2)).sum();
        let avg = sum as f64 / n as f64;
        // n*sq - sum^2 is exact in integers
        let var = (n as u128 * sq - sum * sum) as f64 / (n as f64 * n as f64);
        DepthStats { n, avg_depth: avg, std_depth: var.sqrt(), height: self.height }
    }

    /// Number of internal nodes whose two children are both leaves.
    pub fn sibling_leaf_count(&self) -> usize {
        self.internal_nodes()
            .filter(|&v| self.children[v].is_some_and(|[l, r]| self.is_leaf(l) && self.is_leaf(r)))
            .count()
    }

    pub fn count_cuts(&self) -> CutCountTable {
        let mut counts = vec![BigUint::one(); self.n_nodes()];
        for v in self.postorder() {
            if let Some([l, r]) = self.children[v] {
                counts[v] = BigUint::one() + &counts[l] * &counts[r];
            }
        }
        CutCountTable { root: self.root, counts }
    }

    /// Nodes in breadth-first order, left before right.
    pub fn bfs_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.n_nodes());
        let mut queue = VecDeque::from([self.root]);
        while let Some(v) = queue.pop_front() {
            out.push(v);
            if let Some([l, r]) = self.children[v] {
                queue.push_back(l);
                queue.push_back(r);
            }
        }
        out
    }

    pub fn to_file(&self) -> TreeFile {
        TreeFile {
            n: self.n_leaves,
            nodes: (0..self.n_nodes())
                .map(|v| TreeFileNode { id: v, left: self.left(v), right: self.right(v) })
                .collect(),
            payloads: self.payloads.clone(),
        }
    }

    pub fn from_file(f: &TreeFile) -> Result<Self> {
        let m = f.nodes.len();
        // ids may be any contiguous range; shift to start at zero
        let base = f.nodes.iter().map(|x| x.id).min().unwrap_or(0);
        let mut children = vec![None; m];
        let mut present = vec![false; m];
        for x in &f.nodes {
            let id = x.id.checked_sub(base).filter(|&i| i < m).ok_or(Error::BadNodeId(x.id))?;
            if std::mem::replace(&mut present[id], true) {
                return Err(Error::Parse(format!("duplicate node id {}", x.id)));
            }
            let shift = |c: usize| c.checked_sub(base).filter(|&i| i < m).ok_or(Error::BadNodeId(c));
            children[id] = match (x.left, x.right) {
                (None, None) => None,
                (Some(l), Some(r)) => Some((shift(l)?, shift(r)?)),
                _ => return Err(Error::NotBinary { node: x.id, children: 1 }),
            };
        }
        let h = Self::from_children(&children, f.payloads.clone())?;
        if f.n != h.n_leaves {
            return Err(Error::Parse(format!("declared n = {} but the tree has {} leaves", f.n, h.n_leaves)));
        }
        Ok(h)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let f: TreeFile = serde_json::from_str(&text)?;
        Self::from_file(&f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_file())?)?;
        Ok(())
    }
}

pub struct Ancestors<'a> {
    h: &'a Hierarchy,
    cur: Option<NodeId>,
}

impl Iterator for Ancestors<'_> {
    type Item = NodeId;
    fn next(&mut self) -> Option<NodeId> {
        let v = self.cur?;
        self.cur = self.h.parent[v];
        Some(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFile {
    pub n: usize,
    pub nodes: Vec<TreeFileNode>,
    #[serde(default)]
    pub payloads: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFileNode {
    pub id: usize,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthStats {
    pub n: usize,
    pub avg_depth: f64,
    pub std_depth: f64,
    pub height: usize,
}

/// Lower boundary of a cut, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cut(Vec<NodeId>);

impl Cut {
    pub fn new(mut nodes: Vec<NodeId>) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        Cut(nodes)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.0.binary_search(&v).is_ok()
    }
}

/// A partition of the leaves, each cluster sorted and clusters ordered by
/// their smallest leaf.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Clustering(Vec<Vec<LeafId>>);

impl Clustering {
    pub fn new(mut clusters: Vec<Vec<LeafId>>) -> Self {
        clusters.retain(|c| !c.is_empty());
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort_unstable_by_key(|c| c[0]);
        Clustering(clusters)
    }

    /// Groups leaves by equal labels.
    pub fn from_labels<T: Eq + std::hash::Hash>(labels: &[T]) -> Self {
        let mut ids = std::collections::HashMap::new();
        let mut clusters: Vec<Vec<LeafId>> = Vec::new();
        for (x, lab) in labels.iter().enumerate() {
            let k = *ids.entry(lab).or_insert_with(|| {
                clusters.push(Vec::new());
                clusters.len() - 1
            });
            clusters[k].push(x);
        }
        Self::new(clusters)
    }

    pub fn clusters(&self) -> &[Vec<LeafId>] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn n_items(&self) -> usize {
        self.0.iter().map(Vec::len).sum()
    }

    /// Cluster index per leaf. Panics if some leaf id is `>= n`.
    pub fn membership(&self, n: usize) -> Vec<u32> {
        let mut m = vec![u32::MAX; n];
        for (k, c) in self.0.iter().enumerate() {
            for &x in c {
                m[x] = k as u32;
            }
        }
        m
    }

    /// Checks the clusters partition `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &x in self.0.iter().flatten() {
            if x >= n || std::mem::replace(&mut seen[x], true) {
                return false;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone)]
pub struct CutCountTable {
    root: NodeId,
    counts: Vec<BigUint>,
}

impl CutCountTable {
    pub fn get(&self, v: NodeId) -> &BigUint {
        &self.counts[v]
    }

    pub fn total(&self) -> &BigUint {
        &self.counts[self.root]
    }

    pub fn as_slice(&self) -> &[BigUint] {
        &self.counts
    }

    pub fn log2(&self, v: NodeId) -> f64 {
        log2_big(&self.counts[v])
    }

    pub fn log2_total(&self) -> f64 {
        self.log2(self.root)
    }
}

/// log2 of an arbitrary-precision integer, accurate to f64 precision.
pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().unwrap();
    top.log2() + shift as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cherry() -> Hierarchy {
        Hierarchy::from_parents(&[Some(2), Some(2), None], vec![]).unwrap()
    }

    #[test]
    fn smallest_tree() {
        let h = cherry();
        assert_eq!(h.n_leaves(), 2);
        assert_eq!(h.height(), 1);
        assert_eq!(h.root(), 2);
        assert_eq!(h.count_cuts().total(), &BigUint::from(2u32));
    }

    #[test]
    fn rejects_unary_node() {
        let err = Hierarchy::from_parents(&[Some(1), Some(3), Some(3), None], vec![]).unwrap_err();
        assert!(matches!(err, Error::NotBinary { node: 1, children: 1 }));
    }

    #[test]
    fn rejects_cycles_and_forests() {
        // 0 <- 1 <- 2 <- 0 plus isolated root 3
        let err = Hierarchy::from_parents(&[Some(2), Some(0), Some(1), None], vec![]);
        assert!(err.is_err());
        let err = Hierarchy::from_parents(&[Some(2), Some(2), None, None], vec![]).unwrap_err();
        assert!(matches!(err, Error::MultipleRoots(_)));
        let err = Hierarchy::from_parents(&[Some(1), Some(0)], vec![]).unwrap_err();
        assert!(matches!(err, Error::Cyclic | Error::NotBinary { .. }));
    }

    #[test]
    fn normalization_puts_leaves_first() {
        // original ids: root 0 with children 3, 1; node 1 with children 2, 4
        let h = Hierarchy::from_parents(&[None, Some(0), Some(1), Some(0), Some(1)], vec![]).unwrap();
        assert_eq!(h.n_leaves(), 3);
        assert_eq!(h.source_id(0), 2);
        assert_eq!(h.source_id(1), 3);
        assert_eq!(h.source_id(2), 4);
        let root = h.root();
        assert_eq!(h.source_id(root), 0);
        // order of appearance: node 1 listed before node 3
        assert_eq!(h.source_id(h.left(root).unwrap()), 1);
    }

    #[test]
    fn depth_stats_line_tree() {
        // line tree with 4 leaves: depths 1,2,3,3
        let h = Hierarchy::from_parents(&[Some(4), Some(5), Some(6), Some(6), None, Some(4), Some(5)], vec![]).unwrap();
        let s = h.leaf_depth_stats();
        assert_eq!(s.avg_depth, 2.25);
        assert_eq!(s.height, 3);
    }

    #[test]
    fn file_round_trip() {
        let h = Hierarchy::from_parents(&[None, Some(0), Some(1), Some(0), Some(1)], vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let back = Hierarchy::from_file(&h.to_file()).unwrap();
        assert_eq!(back.parent_array(), h.parent_array());
        assert_eq!(back.payloads(), h.payloads());
    }

    #[test]
    fn log2_of_huge_counts() {
        let x = BigUint::one() << 5000u32;
        assert!((log2_big(&x) - 5000.0).abs() < 1e-9);
        assert!((log2_big(&BigUint::from(22u32)) - 22f64.log2()).abs() < 1e-12);
    }
}
