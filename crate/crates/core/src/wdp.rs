//! Weighted dichotomic path search and its noise-tolerant variant.
//!
//! The learner keeps a forest of unexplored subtrees. In each round it picks
//! the root-to-terminal path of maximum entropy under
//! `q(i) = Pr(i) * prod_{j strictly above i in its subtree} (1 - Pr(j))`,
//! which is the probability that the cut crosses the path at `i`, and then
//! binary-searches that path weighted by `q`. Each query splits the remaining
//! stretch nearest its mass midpoint, among the splits that still resolve
//! every crossing point `i` within `ceil(log2(1 / q(i)))` queries whenever
//! such a split exists. The cluster found there is emitted and the subtrees
//! hanging off the path above it join the forest.

use crate::error::{Error, Result};
use crate::hierarchy::{Clustering, Cut, Hierarchy, NodeId};
use crate::oracle::{Capped, Halted, MajorityLabeler, NodeLabeler, PairOracle};
use crate::prior::Prior;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize)]
pub struct SearchTrace {
    /// Terminal node at the bottom of the searched path.
    pub path_leaf: NodeId,
    /// Path from the terminal (first) to the subtree root (last).
    pub path: Vec<NodeId>,
    pub entropy: f64,
    /// Entropy of the initial global `q` renormalized onto the path.
    pub normalized_entropy: f64,
    pub queries: usize,
    pub cut_node: NodeId,
    /// `q(cut_node)` when the search started.
    pub cut_mass: f64,
}

#[derive(Debug, Clone)]
pub struct WdpRun {
    pub cut: Cut,
    pub searches: Vec<SearchTrace>,
    pub node_queries: usize,
    /// Posterior after the last update, with partial search results folded in.
    pub posterior: Prior,
    /// The labeler stopped early; `cut` is then the MAP cut of `posterior`.
    pub halted: bool,
    /// Votes that disagreed with an already revealed label. The search only
    /// queries unrevealed nodes, so this stays zero.
    pub contradictions: usize,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    root: NodeId,
    terminal: NodeId,
    entropy: f64,
}

fn plogp(q: f64) -> f64 {
    if q > 0.0 {
        -q * q.log2()
    } else {
        0.0
    }
}

/// Longest path searched with the depth-bounded plan; longer intervals are
/// halved by mass until they fit.
const PLAN_MAX_LEN: usize = 2048;

/// For every interval of search positions, the deepest level at which its
/// subsearch can start while each position `i` is still resolved within
/// `ceil(log2(1 / q_i))` queries.
struct SearchPlan {
    len: usize,
    deepest: Vec<i32>,
}

impl SearchPlan {
    fn new(masses: &[f64]) -> Option<Self> {
        let len = masses.len();
        if len > PLAN_MAX_LEN {
            return None;
        }
        let mut deepest = vec![0i32; len * len];
        for (i, &q) in masses.iter().enumerate() {
            deepest[i * len + i] = if q > 0.0 { ((1.0 / q).log2() - 1e-9).ceil().clamp(0.0, 4096.0) as i32 } else { 4096 };
        }
        for width in 1..len {
            for a in 0..len - width {
                let b = a + width;
                // deepest(a, k) falls and deepest(k + 1, b) rises with k, so the
                // best split sits at their crossing
                let (mut lo, mut hi) = (a, b - 1);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if deepest[a * len + mid] <= deepest[(mid + 1) * len + b] {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                let at = |k: usize| deepest[a * len + k].min(deepest[(k + 1) * len + b]);
                let best = if lo > a { at(lo).max(at(lo - 1)) } else { at(lo) };
                deepest[a * len + b] = best - 1;
            }
        }
        Some(Self { len, deepest })
    }

    fn deepest(&self, a: usize, b: usize) -> i32 {
        self.deepest[a * self.len + b]
    }
}

/// Path-search learner over a hierarchy whose `terminal` nodes are known to
/// be at or below the cut (at least every leaf).
pub struct Wdp<'h> {
    h: &'h Hierarchy,
    pr: Vec<f64>,
    q: Vec<f64>,
    initial_q: Vec<f64>,
    terminal: Vec<bool>,
    forest: Vec<Candidate>,
    clusters: Vec<NodeId>,
}

impl<'h> Wdp<'h> {
    pub fn new(h: &'h Hierarchy, prior: &Prior) -> Self {
        Self::with_terminals(h, prior, &[])
    }

    /// `extra_terminals` are internal nodes preset to 1; their subtrees are
    /// never searched.
    pub fn with_terminals(h: &'h Hierarchy, prior: &Prior, extra_terminals: &[NodeId]) -> Self {
        let m = h.n_nodes();
        let mut terminal: Vec<bool> = (0..m).map(|v| h.is_leaf(v)).collect();
        let mut pr = prior.values().to_vec();
        for &t in extra_terminals {
            for v in h.subtree(t) {
                terminal[v] = true;
                pr[v] = 1.0;
            }
        }
        // a node below a terminal is never visited; keep the top-most only
        for &v in h.preorder() {
            if h.parent(v).is_some_and(|p| terminal[p]) {
                terminal[v] = false;
            }
        }
        let mut s = Self { h, pr, q: vec![0.0; m], initial_q: Vec::new(), terminal, forest: Vec::new(), clusters: Vec::new() };
        if s.terminal[h.root()] {
            s.clusters.push(h.root());
        } else {
            s.plant(h.root());
        }
        s.initial_q = s.q.clone();
        s
    }

    pub fn q(&self, v: NodeId) -> f64 {
        self.q[v]
    }

    pub fn posterior(&self) -> Prior {
        Prior::explicit(self.h, self.pr.clone()).expect("posterior stays in [0, 1]")
    }

    pub fn forest_roots(&self) -> Vec<NodeId> {
        self.forest.iter().map(|c| c.root).collect()
    }

    pub fn is_terminal(&self, v: NodeId) -> bool {
        self.terminal[v]
    }

    /// Adds the subtree at `root` to the forest, recomputing `q` relative to
    /// `root` and locating its maximum-entropy path.
    fn plant(&mut self, root: NodeId) {
        let mut best = Candidate { root, terminal: usize::MAX, entropy: f64::NEG_INFINITY };
        // (node, product of (1 - Pr) strictly above it, entropy strictly above it)
        let mut stack = vec![(root, 1.0f64, 0.0f64)];
        while let Some((v, above, ent)) = stack.pop() {
            let qv = self.pr[v] * above;
            self.q[v] = qv;
            let ent = ent + plogp(qv);
            if self.terminal[v] {
                if ent > best.entropy || (ent == best.entropy && v < best.terminal) {
                    best = Candidate { root, terminal: v, entropy: ent };
                }
                continue;
            }
            let below = above * (1.0 - self.pr[v]);
            for c in self.h.children(v).unwrap() {
                stack.push((c, below, ent));
            }
        }
        self.forest.push(best);
    }

    /// Index into the forest of the maximum-entropy path; ties go to the
    /// smallest terminal id.
    fn select(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in self.forest.iter().enumerate() {
            best = match best {
                None => Some(i),
                Some(b) => {
                    let cb = &self.forest[b];
                    if c.entropy > cb.entropy || (c.entropy == cb.entropy && c.terminal < cb.terminal) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    }

    /// Terminal and entropy of the path the next round will search.
    pub fn peek(&self) -> Option<(NodeId, NodeId, f64)> {
        self.select().map(|i| {
            let c = self.forest[i];
            (c.terminal, c.root, c.entropy)
        })
    }

    fn path(&self, c: &Candidate) -> Vec<NodeId> {
        let mut path = vec![c.terminal];
        let mut v = c.terminal;
        while v != c.root {
            v = self.h.parent(v).unwrap();
            path.push(v);
        }
        path
    }

    /// Runs one select/search/update round. `Ok(None)` once the forest is empty.
    pub fn step<L: NodeLabeler + ?Sized>(&mut self, labeler: &mut L) -> std::result::Result<Option<SearchTrace>, Halted> {
        let Some(idx) = self.select() else { return Ok(None) };
        let cand = self.forest[idx];
        let path = self.path(&cand);
        let masses: Vec<f64> = path.iter().map(|&v| self.q[v]).collect();
        let plan = SearchPlan::new(&masses);
        let (mut a, mut b) = (0usize, path.len() - 1);
        let mut queries = 0;
        while a < b {
            let total: f64 = masses[a..=b].iter().sum();
            let half = total / 2.0;
            let within = plan.as_ref().filter(|p| p.deepest(a, b) >= queries as i32);
            let mut prefix = 0.0;
            let mut k_star = usize::MAX;
            let mut gap = f64::INFINITY;
            for k in a..b {
                prefix += masses[k];
                if within.is_some_and(|p| p.deepest(a, k).min(p.deepest(k + 1, b)) <= queries as i32) {
                    continue;
                }
                let d = (half - prefix).abs();
                if d < gap {
                    gap = d;
                    k_star = k;
                }
            }
            let probe = path[k_star + 1];
            let y = labeler.label(self.h, probe)?;
            queries += 1;
            if y {
                a = k_star + 1;
                self.pr[probe] = 1.0;
            } else {
                b = k_star;
                for &v in &path[k_star + 1..] {
                    self.pr[v] = 0.0;
                }
            }
        }
        let u = path[a];
        let cut_mass = self.q[u];
        self.forest.swap_remove(idx);
        for v in self.h.subtree(u) {
            self.pr[v] = 1.0;
            self.q[v] = 0.0;
        }
        self.q[u] = 1.0;
        self.clusters.push(u);
        for w in a + 1..path.len() {
            let j = path[w];
            self.pr[j] = 0.0;
            self.q[j] = 0.0;
            let [l, r] = self.h.children(j).unwrap();
            let off = if l == path[w - 1] { r } else { l };
            if self.terminal[off] {
                self.clusters.push(off);
            } else {
                self.plant(off);
            }
        }
        let normalized_entropy = {
            let mass: f64 = path.iter().map(|&v| self.initial_q[v]).sum();
            if mass > 0.0 {
                path.iter().map(|&v| plogp(self.initial_q[v] / mass)).sum()
            } else {
                0.0
            }
        };
        Ok(Some(SearchTrace {
            path_leaf: cand.terminal,
            entropy: cand.entropy,
            normalized_entropy,
            queries,
            cut_node: u,
            cut_mass,
            path,
        }))
    }

    pub fn cut(&self) -> Cut {
        Cut::new(self.clusters.clone())
    }

    pub fn is_done(&self) -> bool {
        self.forest.is_empty()
    }
}

/// Runs the path search to completion, or until the labeler halts.
pub fn run_wdp<L: NodeLabeler + ?Sized>(h: &Hierarchy, prior: &Prior, labeler: &mut L) -> WdpRun {
    run_from(Wdp::new(h, prior), h, labeler)
}

fn run_from<L: NodeLabeler + ?Sized>(mut state: Wdp<'_>, h: &Hierarchy, labeler: &mut L) -> WdpRun {
    let mut searches = Vec::new();
    let mut halted = false;
    loop {
        match state.step(labeler) {
            Ok(Some(s)) => searches.push(s),
            Ok(None) => break,
            Err(_) => {
                halted = true;
                break;
            }
        }
    }
    let posterior = state.posterior();
    let cut = if halted { posterior.map_cut(h) } else { state.cut() };
    let node_queries = searches.iter().map(|s| s.queries).sum::<usize>();
    WdpRun { cut, searches, node_queries, posterior, halted, contradictions: 0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NwdpConfig {
    pub lambda: f64,
    pub delta: f64,
    /// Scale of the small-node threshold.
    pub alpha: f64,
    /// Scale of the number of votes per node query.
    pub vote_multiplier: f64,
    /// Overrides the computed vote count.
    pub votes: Option<usize>,
    /// Maximum number of pair queries.
    pub budget: Option<u64>,
}

impl Default for NwdpConfig {
    fn default() -> Self {
        Self { lambda: 0.0, delta: 0.05, alpha: 2.0, vote_multiplier: 2.0, votes: None, budget: None }
    }
}

impl NwdpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0, 0.5), got {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 0.5), got {}", self.delta)));
        }
        if !(self.alpha >= 0.0) || !(self.vote_multiplier > 0.0) {
            return Err(Error::InvalidParameter("alpha must be >= 0 and vote_multiplier > 0".into()));
        }
        if self.votes == Some(0) {
            return Err(Error::InvalidParameter("votes must be positive".into()));
        }
        Ok(())
    }

    fn log_term(&self, n: usize) -> f64 {
        (n as f64 / self.delta).ln() / (1.0 - 2.0 * self.lambda).powi(2)
    }

    /// Nodes splitting fewer leaf pairs than this are preset to 1.
    pub fn small_node_threshold(&self, n: usize) -> f64 {
        self.alpha * self.log_term(n)
    }

    pub fn vote_count(&self, n: usize) -> usize {
        self.votes.unwrap_or_else(|| (self.vote_multiplier * self.log_term(n)).ceil().max(1.0) as usize)
    }
}

/// Top-most internal nodes splitting fewer than `threshold` leaf pairs.
pub fn small_nodes(h: &Hierarchy, threshold: f64) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut stack = vec![h.root()];
    while let Some(v) = stack.pop() {
        if let Some([l, r]) = h.children(v) {
            if (h.pair_count(v) as f64) < threshold {
                out.push(v);
            } else {
                stack.push(r);
                stack.push(l);
            }
        }
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone)]
pub struct NwdpRun {
    pub cut: Cut,
    pub clustering: Clustering,
    pub wdp: WdpRun,
    /// Internal nodes preset to 1 before searching.
    pub preset: Vec<NodeId>,
    pub votes: usize,
    pub pair_queries: u64,
}

/// Noise-tolerant path search: small nodes are preset to 1, and each node
/// query is a majority vote over random pairs across the node's split.
pub fn run_nwdp<O: PairOracle + ?Sized, R: Rng>(
    h: &Hierarchy,
    prior: &Prior,
    oracle: &O,
    cfg: &NwdpConfig,
    rng: R,
) -> Result<NwdpRun> {
    cfg.validate()?;
    let n = h.n_leaves();
    let preset = small_nodes(h, cfg.small_node_threshold(n));
    let votes = cfg.vote_count(n);
    let capped = Capped::new(oracle, cfg.budget);
    let mut labeler = MajorityLabeler { oracle: &capped, rng, votes };
    let state = Wdp::with_terminals(h, prior, &preset);
    let wdp = run_from(state, h, &mut labeler);
    let clustering = h.cut_to_clustering(&wdp.cut)?;
    Ok(NwdpRun { cut: wdp.cut.clone(), clustering, wdp, preset, votes, pair_queries: capped.queries() })
}

/// Writes the per-search trace as CSV.
pub fn write_trace<W: std::io::Write>(searches: &[SearchTrace], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["search_idx", "path_leaf", "path_len", "entropy", "normalized_entropy", "queries", "cut_node"])?;
    for (i, s) in searches.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.path_leaf.to_string(),
            s.path.len().to_string(),
            format!("{:.6}", s.entropy),
            format!("{:.6}", s.normalized_entropy),
            s.queries.to_string(),
            s.cut_node.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
