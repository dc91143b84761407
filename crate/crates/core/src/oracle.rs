//! Persistent pairwise similarity sources and the node labelers built on them.

use crate::error::{Error, Result};
use crate::hierarchy::{Cut, Hierarchy, LeafId, NodeId};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Pos,
    #[serde(rename = "-1")]
    Neg,
}

impl Sign {
    pub fn from_bool(similar: bool) -> Self {
        if similar {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    pub fn is_pos(self) -> bool {
        self == Sign::Pos
    }

    pub fn value(self) -> i8 {
        match self {
            Sign::Pos => 1,
            Sign::Neg => -1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }
}

/// Why an oracle refused to answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halted {
    /// The query budget is spent.
    Budget,
    /// The consumer asked the run to stop.
    Stopped,
}

/// Ground-truth similarity over leaves `0..n`, read without metering.
pub trait SimilarityMatrix: Send + Sync {
    fn n(&self) -> usize;
    fn sigma(&self, a: LeafId, b: LeafId) -> Sign;

    /// Structure that lets evaluation avoid visiting all pairs.
    fn structure(&self) -> Structure<'_> {
        Structure::Opaque
    }
}

pub enum Structure<'a> {
    /// `sigma(a, b) = +1` iff the cluster ids agree.
    Partition(&'a [u32]),
    /// A partition with an explicit set of flipped pairs.
    NoisyPartition { base: &'a [u32], flips: &'a [(u32, u32)] },
    Opaque,
}

/// Metered access to similarity answers.
pub trait PairOracle: Send + Sync {
    fn answer(&self, a: LeafId, b: LeafId) -> std::result::Result<Sign, Halted>;
    /// Number of answered queries on distinct leaves.
    fn queries(&self) -> u64;
}

/// Similarity given by a per-leaf cluster id.
#[derive(Debug, Clone)]
pub struct PartitionMatrix {
    ids: Vec<u32>,
}

impl PartitionMatrix {
    pub fn new(ids: Vec<u32>) -> Self {
        Self { ids }
    }

    /// Ground truth planted by a cut of `h`.
    pub fn planted(h: &Hierarchy, cut: &Cut) -> Result<Self> {
        Ok(Self { ids: h.cut_membership(cut)? })
    }

    /// Ground truth given by class labels, one per leaf.
    pub fn from_labels<T: Eq + std::hash::Hash>(labels: &[T], n: usize) -> Result<Self> {
        if labels.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: labels.len() });
        }
        let mut map = HashMap::new();
        let ids = labels
            .iter()
            .map(|l| {
                let next = map.len() as u32;
                *map.entry(l).or_insert(next)
            })
            .collect();
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }
}

impl SimilarityMatrix for PartitionMatrix {
    fn n(&self) -> usize {
        self.ids.len()
    }

    fn sigma(&self, a: LeafId, b: LeafId) -> Sign {
        Sign::from_bool(self.ids[a] == self.ids[b])
    }

    fn structure(&self) -> Structure<'_> {
        Structure::Partition(&self.ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Flip exactly `floor(lambda * C(n,2))` distinct pairs.
    ExactSubset,
    /// Flip each pair independently with probability `lambda`.
    Bernoulli,
    /// Exact subset when `C(n,2)` is at most [`EXACT_PAIR_LIMIT`].
    Auto,
}

pub const EXACT_PAIR_LIMIT: u64 = 50_000_000;

impl std::str::FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-subset" | "exact" => Ok(NoiseMode::ExactSubset),
            "bernoulli" => Ok(NoiseMode::Bernoulli),
            "auto" => Ok(NoiseMode::Auto),
            _ => Err(Error::InvalidParameter(format!("unknown noise mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub lambda: f64,
    pub seed: u64,
    pub mode: NoiseMode,
}

impl NoiseConfig {
    pub fn new(lambda: f64, seed: u64) -> Self {
        Self { lambda, seed, mode: NoiseMode::Auto }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0, 0.5), got {}", self.lambda)));
        }
        Ok(())
    }
}

pub fn pair_total(n: usize) -> u64 {
    n as u64 * (n as u64).saturating_sub(1) / 2
}

/// Dense index of the unordered pair `{a, b}` among all `C(n,2)` pairs.
pub fn pair_index(a: LeafId, b: LeafId, n: usize) -> u64 {
    let (a, b) = if a < b { (a as u64, b as u64) } else { (b as u64, a as u64) };
    let n = n as u64;
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// Inverse of [`pair_index`].
pub fn pair_at(k: u64, n: usize) -> (LeafId, LeafId) {
    let n64 = n as u64;
    let start = |a: u64| a * (2 * n64 - a - 1) / 2;
    // row a satisfies start(a) <= k < start(a+1); solve the quadratic then fix rounding
    let nf = n as f64;
    let disc = (2.0 * nf - 1.0).powi(2) - 8.0 * k as f64;
    let mut a = (((2.0 * nf - 1.0) - disc.max(0.0).sqrt()) / 2.0).floor().max(0.0) as u64;
    while a > 0 && start(a) > k {
        a -= 1;
    }
    while start(a + 1) <= k {
        a += 1;
    }
    let b = a + 1 + (k - start(a));
    (a as usize, b as usize)
}

/// Number of pairs flipped by exact-subset noise, `floor(lambda * C(n,2))`,
/// computed so that decimal inputs like 0.29 land on the intended integer.
pub fn flip_count(lambda: f64, n: usize) -> u64 {
    let x = lambda * pair_total(n) as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.floor() as u64
    }
}

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
enum Flips {
    Exact { set: HashSet<u64>, list: Vec<(u32, u32)> },
    Bernoulli { seed: u64, threshold: u64 },
}

/// Persistent noise over a base matrix.
#[derive(Debug, Clone)]
pub struct NoisyMatrix<M> {
    base: M,
    flips: Flips,
    lambda: f64,
}

impl<M: SimilarityMatrix> NoisyMatrix<M> {
    pub fn new(base: M, cfg: NoiseConfig) -> Result<Self> {
        cfg.validate()?;
        let n = base.n();
        let total = pair_total(n);
        let mode = match cfg.mode {
            NoiseMode::Auto if total <= EXACT_PAIR_LIMIT => NoiseMode::ExactSubset,
            NoiseMode::Auto => NoiseMode::Bernoulli,
            m => m,
        };
        let flips = match mode {
            NoiseMode::ExactSubset => {
                let k = flip_count(cfg.lambda, n);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let picked = index::sample(&mut rng, total as usize, k as usize);
                let mut list: Vec<(u32, u32)> = picked
                    .iter()
                    .map(|i| {
                        let (a, b) = pair_at(i as u64, n);
                        (a as u32, b as u32)
                    })
                    .collect();
                list.sort_unstable();
                let set = picked.iter().map(|i| i as u64).collect();
                Flips::Exact { set, list }
            }
            _ => Flips::Bernoulli { seed: cfg.seed, threshold: (cfg.lambda * 2f64.powi(64)) as u64 },
        };
        Ok(Self { base, flips, lambda: cfg.lambda })
    }

    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.flips, Flips::Exact { .. })
    }

    /// Flipped pairs `(a, b)` with `a < b`, when materialized.
    pub fn flipped_pairs(&self) -> Option<&[(u32, u32)]> {
        match &self.flips {
            Flips::Exact { list, .. } => Some(list),
            Flips::Bernoulli { .. } => None,
        }
    }

    pub fn is_flipped(&self, a: LeafId, b: LeafId) -> bool {
        if a == b {
            return false;
        }
        let n = self.base.n();
        match &self.flips {
            Flips::Exact { set, .. } => set.contains(&pair_index(a, b, n)),
            Flips::Bernoulli { seed, threshold } => {
                mix64(seed ^ mix64(pair_index(a, b, n))) < *threshold
            }
        }
    }
}

impl<M: SimilarityMatrix> SimilarityMatrix for NoisyMatrix<M> {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn sigma(&self, a: LeafId, b: LeafId) -> Sign {
        let s = self.base.sigma(a, b);
        if self.is_flipped(a, b) {
            s.flip()
        } else {
            s
        }
    }

    fn structure(&self) -> Structure<'_> {
        match (&self.flips, self.base.structure()) {
            (Flips::Exact { list, .. }, Structure::Partition(base)) => Structure::NoisyPartition { base, flips: list },
            _ => Structure::Opaque,
        }
    }
}

impl<M: SimilarityMatrix + ?Sized> SimilarityMatrix for Box<M> {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn sigma(&self, a: LeafId, b: LeafId) -> Sign {
        (**self).sigma(a, b)
    }
    fn structure(&self) -> Structure<'_> {
        (**self).structure()
    }
}

impl<M: SimilarityMatrix + ?Sized> SimilarityMatrix for &M {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn sigma(&self, a: LeafId, b: LeafId) -> Sign {
        (**self).sigma(a, b)
    }
    fn structure(&self) -> Structure<'_> {
        (**self).structure()
    }
}

impl<M: SimilarityMatrix + ?Sized> SimilarityMatrix for std::sync::Arc<M> {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn sigma(&self, a: LeafId, b: LeafId) -> Sign {
        (**self).sigma(a, b)
    }
    fn structure(&self) -> Structure<'_> {
        (**self).structure()
    }
}

/// Counts queries against a matrix and enforces an optional budget.
#[derive(Debug)]
pub struct Metered<M> {
    matrix: M,
    count: AtomicU64,
    budget: Option<u64>,
}

impl<M: SimilarityMatrix> Metered<M> {
    pub fn new(matrix: M) -> Self {
        Self { matrix, count: AtomicU64::new(0), budget: None }
    }

    pub fn with_budget(matrix: M, budget: u64) -> Self {
        Self { matrix, count: AtomicU64::new(0), budget: Some(budget) }
    }

    pub fn matrix(&self) -> &M {
        &self.matrix
    }
}

impl<M: SimilarityMatrix> PairOracle for Metered<M> {
    fn answer(&self, a: LeafId, b: LeafId) -> std::result::Result<Sign, Halted> {
        if a == b {
            return Ok(Sign::Pos);
        }
        match self.budget {
            None => {
                self.count.fetch_add(1, Ordering::Relaxed);
            }
            Some(cap) => {
                self.count
                    .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |c| (c < cap).then_some(c + 1))
                    .map_err(|_| Halted::Budget)?;
            }
        }
        Ok(self.matrix.sigma(a, b))
    }

    fn queries(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl<O: PairOracle + ?Sized> PairOracle for &O {
    fn answer(&self, a: LeafId, b: LeafId) -> std::result::Result<Sign, Halted> {
        (**self).answer(a, b)
    }
    fn queries(&self) -> u64 {
        (**self).queries()
    }
}

/// Caps the number of queries a run may make against a shared oracle.
pub struct Capped<'a, O: ?Sized> {
    inner: &'a O,
    used: AtomicU64,
    cap: Option<u64>,
}

impl<'a, O: PairOracle + ?Sized> Capped<'a, O> {
    pub fn new(inner: &'a O, cap: Option<u64>) -> Self {
        Self { inner, used: AtomicU64::new(0), cap }
    }
}

impl<O: PairOracle + ?Sized> PairOracle for Capped<'_, O> {
    fn answer(&self, a: LeafId, b: LeafId) -> std::result::Result<Sign, Halted> {
        if a == b {
            return Ok(Sign::Pos);
        }
        if let Some(cap) = self.cap {
            self.used
                .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |c| (c < cap).then_some(c + 1))
                .map_err(|_| Halted::Budget)?;
        } else {
            self.used.fetch_add(1, Ordering::Relaxed);
        }
        self.inner.answer(a, b)
    }

    fn queries(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }
}

/// Reads a `leaf_id,label` CSV into one label per leaf.
pub fn load_labels(path: impl AsRef<Path>, n: usize) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut labels = vec![None; n];
    for row in rdr.records() {
        let row = row?;
        let id: usize = row
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad leaf id in {:?}", row)))?;
        let label = row.get(1).ok_or_else(|| Error::Parse(format!("missing label in {:?}", row)))?;
        if id >= n {
            return Err(Error::BadNodeId(id));
        }
        labels[id] = Some(label.trim().to_string());
    }
    let got = labels.iter().filter(|l| l.is_some()).count();
    if got != n {
        return Err(Error::LengthMismatch { expected: n, got });
    }
    Ok(labels.into_iter().map(Option::unwrap).collect())
}

/// Answers `y(i)`: whether node `i` is at or below the target cut.
pub trait NodeLabeler {
    fn label(&mut self, h: &Hierarchy, node: NodeId) -> std::result::Result<bool, Halted>;
}

/// Labels a node by one uniformly drawn pair across its split.
pub struct PairLabeler<'a, O: ?Sized, R> {
    pub oracle: &'a O,
    pub rng: R,
}

impl<O: PairOracle + ?Sized, R: Rng> NodeLabeler for PairLabeler<'_, O, R> {
    fn label(&mut self, h: &Hierarchy, node: NodeId) -> std::result::Result<bool, Halted> {
        let (a, b) = h.sample_node_query(node, &mut self.rng).expect("labeler called on a leaf");
        Ok(self.oracle.answer(a, b)?.is_pos())
    }
}

/// Labels a node by a majority vote over `votes` distinct pairs across its split.
pub struct MajorityLabeler<'a, O: ?Sized, R> {
    pub oracle: &'a O,
    pub rng: R,
    pub votes: usize,
}

impl<O: PairOracle + ?Sized, R: Rng> NodeLabeler for MajorityLabeler<'_, O, R> {
    fn label(&mut self, h: &Hierarchy, node: NodeId) -> std::result::Result<bool, Halted> {
        majority_node_label(self.oracle, h, node, self.votes, &mut self.rng)
    }
}

/// Majority over `min(m, |L(left)|*|L(right)|)` distinct pairs drawn
/// uniformly; ties resolve to 0.
pub fn majority_node_label<O: PairOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    h: &Hierarchy,
    node: NodeId,
    m: usize,
    rng: &mut R,
) -> std::result::Result<bool, Halted> {
    assert!(!h.is_leaf(node), "majority vote on a leaf");
    let total = h.pair_count(node);
    let k = (m as u64).min(total) as usize;
    let mut pos = 0;
    for i in index::sample(rng, total as usize, k) {
        let (a, b) = h.node_pair(node, i);
        if oracle.answer(a, b)?.is_pos() {
            pos += 1;
        }
    }
    Ok(2 * pos > k)
}

/// Noise-free node labels read off a known cut.
pub struct CutLabeler {
    below: Vec<bool>,
    pub calls: usize,
}

impl CutLabeler {
    pub fn new(h: &Hierarchy, cut: &Cut) -> Self {
        let mut below = vec![false; h.n_nodes()];
        for &v in h.preorder() {
            below[v] = cut.contains(v) || h.parent(v).is_some_and(|p| below[p]);
        }
        Self { below, calls: 0 }
    }

    pub fn truth(&self, v: NodeId) -> bool {
        self.below[v]
    }
}

impl NodeLabeler for CutLabeler {
    fn label(&mut self, _h: &Hierarchy, node: NodeId) -> std::result::Result<bool, Halted> {
        self.calls += 1;
        Ok(self.below[node])
    }
}
