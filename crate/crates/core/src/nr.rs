//! Importance-weighted selective sampling over the cuts of a tree.
//!
//! [`ErmEngine`] maintains the minimum weighted disagreement over all cuts
//! under a stream of weighted labeled pairs. Each internal node stores the
//! positive and negative weight of pairs that are split below it, per side
//! (left subtree, across, right subtree), plus the cost of the best
//! clustering of each child. Adding a pair touches only the nodes from its
//! lowest common ancestor to the root.

use crate::error::{Error, Result};
use crate::hierarchy::{Clustering, Cut, Hierarchy, LeafId, NodeId};
use crate::lca::LcaIndex;
use crate::oracle::{Halted, PairOracle};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub left_neg: f64,
    pub left_pos: f64,
    pub middle_neg: f64,
    pub middle_pos: f64,
    pub right_neg: f64,
    pub right_pos: f64,
    pub cost_left: f64,
    pub cost_right: f64,
}

impl NodeRecord {
    pub fn sum(&self) -> f64 {
        self.left_neg + self.left_pos + self.middle_neg + self.middle_pos + self.right_neg + self.right_pos
    }

    fn cost_if_merged(&self) -> f64 {
        self.cost_left - self.left_neg - self.middle_neg - self.right_neg + self.cost_right
    }

    fn cost_if_split(&self) -> f64 {
        self.cost_left + self.left_pos + self.middle_pos + self.right_pos + self.cost_right
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSnapshot {
    pub records: Vec<NodeRecord>,
    pub is_cluster: Vec<bool>,
    pub current_cost: f64,
    pub total_abs_weight: f64,
    pub additions: u64,
}

#[derive(Debug, Clone)]
pub struct ErmEngine<'h> {
    h: &'h Hierarchy,
    lca: &'h LcaIndex,
    rec: Vec<NodeRecord>,
    is_cluster: Vec<bool>,
    current_cost: f64,
    total_abs_weight: f64,
    additions: u64,
    last_touched: usize,
}

impl<'h> ErmEngine<'h> {
    pub fn new(h: &'h Hierarchy, lca: &'h LcaIndex) -> Self {
        Self {
            h,
            lca,
            rec: vec![NodeRecord::default(); h.n_nodes()],
            is_cluster: (0..h.n_nodes()).map(|v| h.is_leaf(v)).collect(),
            current_cost: 0.0,
            total_abs_weight: 0.0,
            additions: 0,
            last_touched: 0,
        }
    }

    pub fn hierarchy(&self) -> &'h Hierarchy {
        self.h
    }

    pub fn current_cost(&self) -> f64 {
        self.current_cost
    }

    pub fn total_abs_weight(&self) -> f64 {
        self.total_abs_weight
    }

    pub fn record(&self, v: NodeId) -> &NodeRecord {
        &self.rec[v]
    }

    pub fn is_cluster(&self, v: NodeId) -> bool {
        self.is_cluster[v]
    }

    /// Nodes updated by the most recent weight addition.
    pub fn last_touched(&self) -> usize {
        self.last_touched
    }

    fn lca_of(&self, a: LeafId, b: LeafId) -> Result<NodeId> {
        if a == b {
            return Err(Error::SameLeaf(a));
        }
        Ok(self.lca.lca(a, b))
    }

    fn add_at(&mut self, mut a: NodeId, w: f64) -> f64 {
        if w >= 0.0 {
            self.rec[a].middle_pos += w;
        } else {
            self.rec[a].middle_neg += w;
        }
        self.is_cluster[a] = self.rec[a].sum() >= 0.0;
        let mut touched = 1;
        while let Some(p) = self.h.parent(a) {
            let r = self.rec[a];
            let (neg, pos, cost) = if self.is_cluster[a] {
                (0.0, 0.0, r.cost_if_merged())
            } else {
                (r.left_neg + r.middle_neg + r.right_neg, r.left_pos + r.middle_pos + r.right_pos, r.cost_left + r.cost_right)
            };
            let pr = &mut self.rec[p];
            if self.h.left(p) == Some(a) {
                pr.left_neg = neg;
                pr.left_pos = pos;
                pr.cost_left = cost;
            } else {
                pr.right_neg = neg;
                pr.right_pos = pos;
                pr.cost_right = cost;
            }
            self.is_cluster[p] = pr.sum() >= 0.0;
            a = p;
            touched += 1;
        }
        self.last_touched = touched;
        let r = &self.rec[a];
        if self.is_cluster[a] {
            r.cost_if_merged()
        } else {
            r.cost_if_split()
        }
    }

    /// Adds weight `w` to the pair and returns the new minimum total cost.
    /// Positive weight favors putting the pair together.
    pub fn add_weight(&mut self, a: LeafId, b: LeafId, w: f64) -> Result<f64> {
        let v = self.lca_of(a, b)?;
        self.total_abs_weight += w.abs();
        self.additions += 1;
        self.current_cost = self.add_at(v, w);
        Ok(self.current_cost)
    }

    pub fn same_cluster(&self, a: LeafId, b: LeafId) -> Result<bool> {
        let mut v = self.lca_of(a, b)?;
        loop {
            if self.is_cluster[v] {
                return Ok(true);
            }
            match self.h.parent(v) {
                Some(p) => v = p,
                None => return Ok(false),
            }
        }
    }

    /// Minimum cost over cuts that put the pair together (`same`) or apart,
    /// leaving the engine unchanged.
    pub fn constrained_cost(&mut self, a: LeafId, b: LeafId, same: bool) -> Result<f64> {
        let v = self.lca_of(a, b)?;
        let path: Vec<NodeId> = std::iter::once(v).chain(self.h.ancestors(v)).collect();
        let saved: Vec<(NodeRecord, bool)> = path.iter().map(|&u| (self.rec[u], self.is_cluster[u])).collect();
        let inf = self.total_abs_weight + 1.0;
        let cost = self.add_at(v, if same { inf } else { -inf });
        for (&u, &(r, f)) in path.iter().zip(&saved) {
            self.rec[u] = r;
            self.is_cluster[u] = f;
        }
        Ok(cost)
    }

    /// Top-most flagged nodes, found breadth-first from the root.
    pub fn current_cut(&self) -> Cut {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([self.h.root()]);
        while let Some(v) = queue.pop_front() {
            if self.is_cluster[v] {
                out.push(v);
            } else {
                queue.extend(self.h.children(v).unwrap());
            }
        }
        Cut::new(out)
    }

    pub fn current_clustering(&self) -> Clustering {
        self.h.cut_to_clustering(&self.current_cut()).expect("flag cut is valid")
    }

    pub fn snapshot(&self) -> EngineSnapshot {
        EngineSnapshot {
            records: self.rec.clone(),
            is_cluster: self.is_cluster.clone(),
            current_cost: self.current_cost,
            total_abs_weight: self.total_abs_weight,
            additions: self.additions,
        }
    }

    pub fn restore(&mut self, s: &EngineSnapshot) -> Result<()> {
        if s.records.len() != self.h.n_nodes() || s.is_cluster.len() != self.h.n_nodes() {
            return Err(Error::LengthMismatch { expected: self.h.n_nodes(), got: s.records.len() });
        }
        self.rec.clone_from(&s.records);
        self.is_cluster.clone_from(&s.is_cluster);
        self.current_cost = s.current_cost;
        self.total_abs_weight = s.total_abs_weight;
        self.additions = s.additions;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { delta: 0.05, c1: 1.0, c2: 1.0 }
    }
}

impl SamplerConfig {
    /// Both constants set to `c`.
    pub fn scaled(c: f64) -> Self {
        Self { c1: c, c2: c, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidParameter("c1 and c2 must be positive".into()));
        }
        Ok(())
    }

    /// Query probability at round `t` given the gap `d` between the best
    /// cut that disagrees with the current prediction and the best cut.
    /// `log2_cuts` is `log2 N(T)`.
    pub fn query_probability(&self, t: u64, d: f64, log2_cuts: f64) -> f64 {
        if t <= 1 || d <= 0.0 {
            return 1.0;
        }
        let tf = t as f64;
        let log_term = log2_cuts * std::f64::consts::LN_2 + (1.0 / self.delta).ln() + tf.ln().max(1.0).ln();
        ((self.c1 / (d * d) + self.c2 / d) * log_term / tf).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NrRound {
    pub t: u64,
    pub pair: (LeafId, LeafId),
    pub d: f64,
    pub p: f64,
    pub queried: bool,
    pub cum_queries: u64,
    pub cost: f64,
}

/// Selective sampler state for one run.
pub struct Sampler<'h> {
    pub engine: ErmEngine<'h>,
    cfg: SamplerConfig,
    log2_cuts: f64,
    t: u64,
    queries: u64,
}

impl<'h> Sampler<'h> {
    pub fn new(h: &'h Hierarchy, lca: &'h LcaIndex, cfg: SamplerConfig) -> Self {
        let log2_cuts = h.count_cuts().log2_total();
        Self { engine: ErmEngine::new(h, lca), cfg, log2_cuts, t: 0, queries: 0 }
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// Processes one pair: decides whether to query it and, if so, adds its
    /// importance-weighted label.
    pub fn step<O: PairOracle + ?Sized, R: Rng + ?Sized>(
        &mut self,
        a: LeafId,
        b: LeafId,
        oracle: &O,
        rng: &mut R,
    ) -> std::result::Result<NrRound, Halted> {
        self.t += 1;
        let t = self.t;
        let same = self.engine.same_cluster(a, b).expect("distinct leaves");
        let flipped = self.engine.constrained_cost(a, b, !same).expect("distinct leaves");
        let d = if t > 1 { (flipped - self.engine.current_cost()) / (t - 1) as f64 } else { 0.0 };
        let p = self.cfg.query_probability(t, d, self.log2_cuts);
        let queried = p >= 1.0 || rng.gen::<f64>() < p;
        if queried {
            let sigma = match oracle.answer(a, b) {
                Ok(s) => s,
                Err(e) => {
                    self.t -= 1;
                    return Err(e);
                }
            };
            self.queries += 1;
            self.engine.add_weight(a, b, sigma.value() as f64 / p).expect("distinct leaves");
        }
        Ok(NrRound { t, pair: (a, b), d, p, queried, cum_queries: self.queries, cost: self.engine.current_cost() })
    }
}

/// Uniform ordered pair of distinct leaves.
pub fn uniform_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (LeafId, LeafId) {
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NrStop {
    /// Stop after this many label queries.
    pub query_budget: Option<u64>,
    /// Stop after this many rounds.
    pub max_rounds: u64,
}

#[derive(Debug, Clone)]
pub struct NrRun {
    pub cut: Cut,
    pub clustering: Clustering,
    pub queries: u64,
    pub rounds: u64,
    pub cost: f64,
    pub trace: Vec<NrRound>,
}

/// Streams uniform pairs through the sampler until the budget, the round
/// limit, or the oracle stops it.
pub fn run_nr<O: PairOracle + ?Sized, R: Rng + ?Sized>(
    h: &Hierarchy,
    lca: &LcaIndex,
    oracle: &O,
    cfg: &SamplerConfig,
    stop: NrStop,
    keep_trace: bool,
    rng: &mut R,
) -> Result<NrRun> {
    cfg.validate()?;
    let mut s = Sampler::new(h, lca, *cfg);
    let mut trace = Vec::new();
    while s.rounds() < stop.max_rounds && stop.query_budget.is_none_or(|b| s.queries() < b) {
        let (a, b) = uniform_pair(h.n_leaves(), rng);
        match s.step(a, b, oracle, rng) {
            Ok(r) if keep_trace => trace.push(r),
            Ok(_) => {}
            Err(_) => break,
        }
    }
    let cut = s.engine.current_cut();
    Ok(NrRun {
        clustering: h.cut_to_clustering(&cut)?,
        cut,
        queries: s.queries(),
        rounds: s.rounds(),
        cost: s.engine.current_cost(),
        trace,
    })
}

pub fn write_trace<W: std::io::Write>(trace: &[NrRound], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "pair_i", "pair_j", "d_t", "p_t", "queried", "cum_queries", "cost"])?;
    for r in trace {
        w.write_record([
            r.t.to_string(),
            r.pair.0.to_string(),
            r.pair.1.to_string(),
            r.d.to_string(),
            r.p.to_string(),
            u8::from(r.queried).to_string(),
            r.cum_queries.to_string(),
            r.cost.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cherry_costs() {
        let h = Hierarchy::from_parents(&[Some(2), Some(2), None], vec![]).unwrap();
        let lca = LcaIndex::new(&h);
        let mut e = ErmEngine::new(&h, &lca);
        assert!(!e.same_cluster(0, 1).unwrap());
        assert_eq!(e.constrained_cost(0, 1, false).unwrap(), 0.0);
        assert_eq!(e.constrained_cost(0, 1, true).unwrap(), 0.0);
        assert_eq!(e.add_weight(0, 1, 1.0).unwrap(), 0.0);
        assert!(e.is_cluster(2));
        assert!(e.same_cluster(0, 1).unwrap());
        assert_eq!(e.add_weight(0, 1, -2.0).unwrap(), 1.0);
        assert!(!e.is_cluster(2));
        assert!(matches!(e.add_weight(1, 1, 1.0), Err(Error::SameLeaf(1))));
    }

    #[test]
    fn degenerate_probabilities() {
        let cfg = SamplerConfig::default();
        assert_eq!(cfg.query_probability(1, 5.0, 10.0), 1.0);
        assert_eq!(cfg.query_probability(10, 0.0, 10.0), 1.0);
        assert!(cfg.query_probability(1_000_000, 10.0, 1.0) < 1.0);
    }
}
