//! Disagreement metrics between similarity relations and clusterings, and
//! the best cut in hindsight.

use crate::error::{Error, Result};
use crate::hierarchy::{Clustering, Cut, Hierarchy, LeafId, NodeId};
use crate::lca::LcaIndex;
use crate::oracle::{pair_index, SimilarityMatrix, Structure};
use rand::Rng;
use serde::Serialize;
use std::collections::{HashMap, HashSet};

/// Hamming distance over ordered pairs of distinct items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distance {
    pub ordered_pairs: f64,
    pub exact: bool,
    /// Half-width of a 95% interval when estimated by sampling.
    pub ci95: Option<f64>,
}

impl Distance {
    fn exact(d: u64) -> Self {
        Distance { ordered_pairs: d as f64, exact: true, ci95: None }
    }

    /// Fraction of ordered pairs in disagreement.
    pub fn fraction(&self, n: usize) -> f64 {
        self.ordered_pairs / (n as f64 * (n as f64 - 1.0))
    }
}

fn choose2(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// Ordered-pair disagreement between two partitions given by per-item ids.
pub fn partition_distance(a: &[u32], b: &[u32]) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::UniverseMismatch { reference: a.len(), candidate: b.len() });
    }
    let mut ca: HashMap<u32, u64> = HashMap::new();
    let mut cb: HashMap<u32, u64> = HashMap::new();
    let mut cab: HashMap<(u32, u32), u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        *cab.entry((x, y)).or_default() += 1;
    }
    let same_a: u64 = ca.values().map(|&k| choose2(k)).sum();
    let same_b: u64 = cb.values().map(|&k| choose2(k)).sum();
    let both: u64 = cab.values().map(|&k| choose2(k)).sum();
    Ok(2 * (same_a + same_b - 2 * both))
}

pub fn clustering_distance(a: &Clustering, b: &Clustering, n: usize) -> Result<u64> {
    if !a.is_partition_of(n) {
        return Err(Error::UniverseMismatch { reference: a.n_items(), candidate: n });
    }
    if !b.is_partition_of(n) {
        return Err(Error::UniverseMismatch { reference: n, candidate: b.n_items() });
    }
    partition_distance(&a.membership(n), &b.membership(n))
}

/// Pairs sampled when the reference has no usable structure and is too
/// large to scan.
pub const MONTE_CARLO_PAIRS: usize = 1_000_000;
const BRUTE_FORCE_LIMIT: usize = 4096;

/// `d_H` between a similarity relation and a candidate clustering. Exact
/// for partition-backed and materialized-noise references; otherwise exact
/// by scanning when `n` is small, else a Monte Carlo estimate.
pub fn hamming_distance<M: SimilarityMatrix + ?Sized, R: Rng + ?Sized>(
    reference: &M,
    candidate: &Clustering,
    rng: &mut R,
) -> Result<Distance> {
    let n = reference.n();
    if !candidate.is_partition_of(n) {
        return Err(Error::UniverseMismatch { reference: n, candidate: candidate.n_items() });
    }
    let cand = candidate.membership(n);
    match reference.structure() {
        Structure::Partition(ids) => Ok(Distance::exact(partition_distance(ids, &cand)?)),
        Structure::NoisyPartition { base, flips } => {
            let mut d = partition_distance(base, &cand)? as i64;
            for &(a, b) in flips {
                let (a, b) = (a as usize, b as usize);
                // a flip turns agreement into disagreement and back
                d += if (base[a] == base[b]) == (cand[a] == cand[b]) { 2 } else { -2 };
            }
            Ok(Distance::exact(d as u64))
        }
        Structure::Opaque if n <= BRUTE_FORCE_LIMIT => {
            let mut d = 0u64;
            for a in 0..n {
                for b in a + 1..n {
                    if reference.sigma(a, b).is_pos() != (cand[a] == cand[b]) {
                        d += 2;
                    }
                }
            }
            Ok(Distance::exact(d))
        }
        Structure::Opaque => {
            let total = n as f64 * (n as f64 - 1.0);
            let mut bad = 0usize;
            for _ in 0..MONTE_CARLO_PAIRS {
                let (a, b) = crate::nr::uniform_pair(n, rng);
                if reference.sigma(a, b).is_pos() != (cand[a] == cand[b]) {
                    bad += 1;
                }
            }
            let p = bad as f64 / MONTE_CARLO_PAIRS as f64;
            let half = 1.96 * (p * (1.0 - p) / MONTE_CARLO_PAIRS as f64).sqrt();
            Ok(Distance { ordered_pairs: p * total, exact: false, ci95: Some(half * total) })
        }
    }
}

/// `(d_H(reference, candidate) - d_H(reference, best)) / n^2`.
pub fn excess_risk(candidate: &Distance, best: &Distance, n: usize) -> f64 {
    (candidate.ordered_pairs - best.ordered_pairs) / (n as f64 * n as f64)
}

/// Per internal node, the total weight of similar and dissimilar leaf pairs
/// split by that node (one side in each child subtree), over unordered pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCountTable {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl PairCountTable {
    pub fn zeros(h: &Hierarchy) -> Self {
        Self { pos: vec![0.0; h.n_nodes()], neg: vec![0.0; h.n_nodes()] }
    }

    /// From per-leaf class ids using class histograms merged small into large.
    pub fn from_labels(h: &Hierarchy, labels: &[u32]) -> Result<Self> {
        if labels.len() != h.n_leaves() {
            return Err(Error::LengthMismatch { expected: h.n_leaves(), got: labels.len() });
        }
        let mut t = Self::zeros(h);
        let mut hist: Vec<Option<HashMap<u32, u64>>> = vec![None; h.n_nodes()];
        for v in h.postorder() {
            match h.children(v) {
                None => hist[v] = Some(HashMap::from([(labels[v], 1)])),
                Some([l, r]) => {
                    let mut a = hist[l].take().unwrap();
                    let mut b = hist[r].take().unwrap();
                    if a.len() < b.len() {
                        std::mem::swap(&mut a, &mut b);
                    }
                    let mut cross = 0u64;
                    for (c, k) in b {
                        let e = a.entry(c).or_default();
                        cross += k * *e;
                        *e += k;
                    }
                    t.pos[v] = cross as f64;
                    t.neg[v] = h.pair_count(v) as f64 - cross as f64;
                    hist[v] = Some(a);
                }
            }
        }
        Ok(t)
    }

    /// Adds `w` to the pair's side, positive for similar pairs.
    pub fn add(&mut self, lca: NodeId, similar: bool, w: f64) {
        if similar {
            self.pos[lca] += w;
        } else {
            self.neg[lca] += w;
        }
    }

    /// Exact table of a similarity relation over the leaves of `h`.
    pub fn from_matrix<M: SimilarityMatrix + ?Sized>(h: &Hierarchy, lca: &LcaIndex, m: &M) -> Result<Self> {
        match m.structure() {
            Structure::Partition(ids) => Self::from_labels(h, ids),
            Structure::NoisyPartition { base, flips } => {
                let mut t = Self::from_labels(h, base)?;
                for &(a, b) in flips {
                    let (a, b) = (a as usize, b as usize);
                    let v = lca.lca(a, b);
                    let was = base[a] == base[b];
                    t.add(v, was, -1.0);
                    t.add(v, !was, 1.0);
                }
                Ok(t)
            }
            Structure::Opaque => {
                let mut t = Self::zeros(h);
                let n = h.n_leaves();
                for a in 0..n {
                    for b in a + 1..n {
                        t.add(lca.lca(a, b), m.sigma(a, b).is_pos(), 1.0);
                    }
                }
                Ok(t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestCut {
    pub cut: Cut,
    /// Minimum disagreement, over ordered pairs.
    pub d_h: f64,
    pub k: usize,
}

/// Cut minimizing disagreement with the table. Merging `v` costs the
/// dissimilar weight inside `L(v)`; splitting costs both children's best
/// plus the similar weight across. Ties split.
pub fn best_cut(h: &Hierarchy, t: &PairCountTable) -> BestCut {
    let m = h.n_nodes();
    let mut inner_neg = vec![0.0f64; m];
    let mut cost = vec![0.0f64; m];
    let mut merge = vec![true; m];
    for v in h.postorder() {
        if let Some([l, r]) = h.children(v) {
            inner_neg[v] = inner_neg[l] + inner_neg[r] + t.neg[v];
            let split = cost[l] + cost[r] + t.pos[v];
            if inner_neg[v] < split {
                cost[v] = inner_neg[v];
            } else {
                cost[v] = split;
                merge[v] = false;
            }
        }
    }
    let cut = h.cut_from_predicate(|v| merge[v]);
    BestCut { k: cut.k(), d_h: 2.0 * cost[h.root()], cut }
}

pub fn best_cut_labels(h: &Hierarchy, labels: &[u32]) -> Result<BestCut> {
    Ok(best_cut(h, &PairCountTable::from_labels(h, labels)?))
}

/// A fixed sample of unordered leaf pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSample {
    pub pairs: Vec<(LeafId, LeafId)>,
}

impl PairSample {
    /// `k` distinct uniform pairs, none of which appear in `exclude`.
    pub fn draw<R: Rng + ?Sized>(n: usize, k: usize, exclude: Option<&PairSample>, rng: &mut R) -> Self {
        let total = crate::oracle::pair_total(n) as usize;
        let banned: HashSet<u64> = exclude.map_or_else(HashSet::new, |e| e.pairs.iter().map(|&(a, b)| pair_index(a, b, n)).collect());
        let k = k.min(total - banned.len());
        let mut seen = HashSet::with_capacity(k);
        let mut pairs = Vec::with_capacity(k);
        while pairs.len() < k {
            let (a, b) = crate::nr::uniform_pair(n, rng);
            let (a, b) = (a.min(b), a.max(b));
            let idx = pair_index(a, b, n);
            if !banned.contains(&idx) && seen.insert(idx) {
                pairs.push((a, b));
            }
        }
        Self { pairs }
    }

    /// Fraction of sampled pairs where the clustering disagrees with the relation.
    pub fn error<M: SimilarityMatrix + ?Sized>(&self, m: &M, membership: &[u32]) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        let bad = self
            .pairs
            .iter()
            .filter(|&&(a, b)| m.sigma(a, b).is_pos() != (membership[a] == membership[b]))
            .count();
        bad as f64 / self.pairs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_items_all_vs_none() {
        let all = Clustering::new(vec![vec![0, 1, 2]]);
        let none = Clustering::new(vec![vec![0], vec![1], vec![2]]);
        assert_eq!(clustering_distance(&all, &none, 3).unwrap(), 6);
        assert_eq!(clustering_distance(&all, &all, 3).unwrap(), 0);
        assert!(clustering_distance(&all, &none, 4).is_err());
    }

    #[test]
    fn uniform_labels_merge_to_root() {
        let h = Hierarchy::from_parents(&[Some(4), Some(4), Some(5), Some(5), Some(6), Some(6), None], vec![]).unwrap();
        let b = best_cut_labels(&h, &[7, 7, 7, 7]).unwrap();
        assert_eq!(b.cut, Cut::new(vec![6]));
        assert_eq!(b.d_h, 0.0);
        let b = best_cut_labels(&h, &[0, 1, 2, 3]).unwrap();
        assert_eq!(b.k, 4);
        assert_eq!(b.d_h, 0.0);
    }
}
