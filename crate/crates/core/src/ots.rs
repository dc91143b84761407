//! One-third splitting: a noiseless version-space learner that recovers a
//! planted cut with at most `ceil(log_{3/2} N)` node queries.
//!
//! Each query is placed on a backbone path running from the root of an
//! unexplored subtree down to its deepest settled node (a leaf, or a node
//! already known to be at or below the cut). Along that path the candidate
//! cuts are grouped by where they cross it, so the sizes of both answers'
//! version spaces follow from prefix sums of sibling subtree sizes.

use crate::hierarchy::{Cut, Hierarchy, NodeId};
use crate::oracle::{Halted, NodeLabeler};
use num_bigint::BigUint;
use num_traits::One;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Unknown,
    /// Strictly above the cut.
    Zero,
    /// At or below the cut.
    One,
}

#[derive(Debug, Clone)]
pub struct OtsStep {
    pub node: NodeId,
    pub answer: bool,
    /// Path from the subtree root down to the settled bottom node.
    pub backbone: Vec<NodeId>,
    /// Version-space size of the subtree being split.
    pub local_size: BigUint,
    pub size_if_zero: BigUint,
    pub size_if_one: BigUint,
    pub bits_before: u64,
    pub bits_after: u64,
}

#[derive(Debug, Clone)]
pub struct OtsRun {
    pub cut: Cut,
    pub steps: Vec<OtsStep>,
    /// Node visits made by scans, label propagation and size updates.
    pub nodes_touched: u64,
    /// The labeler stopped before the cut was identified; `cut` then keeps
    /// every unexplored subtree whole.
    pub halted: bool,
}

impl OtsRun {
    pub fn queries(&self) -> usize {
        self.steps.len()
    }
}

/// Position chosen on a backbone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    /// Backbone index of the node to query (0 = subtree root).
    pub index: usize,
    pub total: BigUint,
    pub if_one: BigUint,
}

/// Picks the deepest backbone position whose "at or below the cut" version
/// space holds at most two thirds of the total.
///
/// `sibling_sizes[z - 1]` is the version-space size of the sibling of the
/// `z`-th backbone node, for `z = 1..=h`. The node at position `h` is
/// settled, so only positions `0..h` are candidates.
pub fn split_point(sibling_sizes: &[&BigUint]) -> Split {
    let h = sibling_sizes.len();
    assert!(h >= 1, "backbone needs an unsettled node");
    // crossing[z]: cuts whose member on the path is its z-th node
    let mut crossing = Vec::with_capacity(h + 1);
    crossing.push(BigUint::one());
    for s in sibling_sizes {
        let next = crossing.last().unwrap() * *s;
        crossing.push(next);
    }
    let total: BigUint = crossing.iter().sum();
    let two_total = &total << 1u32;
    let mut prefix = BigUint::default();
    let mut best = None;
    for (k, c) in crossing.iter().enumerate().take(h) {
        prefix += c;
        if &prefix * 3u32 <= two_total {
            best = Some((k, prefix.clone()));
        } else {
            break;
        }
    }
    let (index, if_one) = best.expect("the subtree root always qualifies");
    Split { index, total, if_one }
}

/// Incremental learner state.
#[derive(Debug, Clone)]
pub struct Ots<'h> {
    h: &'h Hierarchy,
    y: Vec<Label>,
    size: Vec<BigUint>,
    by_depth: Vec<NodeId>,
    scan: usize,
    total: BigUint,
    touched: u64,
}

impl<'h> Ots<'h> {
    pub fn new(h: &'h Hierarchy) -> Self {
        let size = h.count_cuts().as_slice().to_vec();
        let total = size[h.root()].clone();
        let mut by_depth: Vec<NodeId> = (0..h.n_nodes()).collect();
        by_depth.sort_unstable_by_key(|&v| (h.depth(v), v));
        let scan = by_depth.len();
        Self { h, y: vec![Label::Unknown; h.n_nodes()], size, by_depth, scan, total, touched: 0 }
    }

    pub fn label(&self, v: NodeId) -> Label {
        self.y[v]
    }

    pub fn labels(&self) -> &[Label] {
        &self.y
    }

    pub fn version_space_size(&self) -> &BigUint {
        &self.total
    }

    pub fn nodes_touched(&self) -> u64 {
        self.touched
    }

    fn settled(&self, v: NodeId) -> bool {
        self.h.is_leaf(v) || self.y[v] == Label::One
    }

    fn unrevealed(&self, v: NodeId) -> bool {
        !self.h.is_leaf(v) && self.y[v] == Label::Unknown
    }

    fn bottom(&mut self) -> Option<NodeId> {
        while self.scan > 0 {
            let v = self.by_depth[self.scan - 1];
            self.touched += 1;
            if self.settled(v) && self.h.parent(v).is_some_and(|p| self.unrevealed(p)) {
                return Some(v);
            }
            self.scan -= 1;
        }
        None
    }

    /// Next backbone (top-down) and the split on it, or `None` once every
    /// node is revealed.
    pub fn next_query(&mut self) -> Option<(Vec<NodeId>, Split)> {
        let bottom = self.bottom()?;
        let mut path = vec![bottom];
        let mut v = bottom;
        while let Some(p) = self.h.parent(v).filter(|&p| self.unrevealed(p)) {
            path.push(p);
            v = p;
        }
        path.reverse();
        self.touched += path.len() as u64;
        let sibs: Vec<&BigUint> = path[1..].iter().map(|&j| &self.size[self.h.sibling(j).unwrap()]).collect();
        let split = split_point(&sibs);
        Some((path, split))
    }

    /// Records the answer for `path[split.index]`.
    pub fn apply(&mut self, path: &[NodeId], split: &Split, answer: bool) {
        let node = path[split.index];
        let local = if answer { split.if_one.clone() } else { &split.total - &split.if_one };
        self.total = &self.total / &split.total * &local;
        if answer {
            let mut stack = vec![node];
            while let Some(v) = stack.pop() {
                self.touched += 1;
                if self.unrevealed(v) {
                    self.y[v] = Label::One;
                    self.size[v] = BigUint::one();
                    stack.extend(self.h.children(v).unwrap());
                }
            }
            for &a in path[..split.index].iter().rev() {
                self.touched += 1;
                let [l, r] = self.h.children(a).unwrap();
                self.size[a] = BigUint::one() + &self.size[l] * &self.size[r];
            }
        } else {
            for &a in &path[..=split.index] {
                self.touched += 1;
                self.y[a] = Label::Zero;
            }
        }
    }

    /// Cut implied by the labels revealed so far, keeping unexplored
    /// subtrees whole.
    pub fn cut(&self) -> Cut {
        self.h.cut_from_predicate(|v| self.y[v] != Label::Zero)
    }
}

pub fn run_ots<L: NodeLabeler + ?Sized>(h: &Hierarchy, labeler: &mut L) -> OtsRun {
    let mut state = Ots::new(h);
    let mut steps = Vec::new();
    let mut halted = false;
    while let Some((path, split)) = state.next_query() {
        let node = path[split.index];
        let answer = match labeler.label(h, node) {
            Ok(a) => a,
            Err(Halted::Budget | Halted::Stopped) => {
                halted = true;
                break;
            }
        };
        let bits_before = state.version_space_size().bits();
        state.apply(&path, &split, answer);
        steps.push(OtsStep {
            node,
            answer,
            size_if_zero: &split.total - &split.if_one,
            size_if_one: split.if_one,
            local_size: split.total,
            backbone: path,
            bits_before,
            bits_after: state.version_space_size().bits(),
        });
    }
    OtsRun { cut: state.cut(), steps, nodes_touched: state.nodes_touched(), halted }
}

/// Writes the query trace as CSV rows
/// `step,queried_node,answer,vs_bits_before,vs_bits_after`.
pub fn write_trace<W: std::io::Write>(steps: &[OtsStep], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "queried_node", "answer", "vs_bits_before", "vs_bits_after"])?;
    for (i, s) in steps.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.node.to_string(),
            u8::from(s.answer).to_string(),
            s.bits_before.to_string(),
            s.bits_after.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
