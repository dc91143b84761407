//! Breadth-first active search and passive empirical risk minimization.

use crate::hierarchy::{Clustering, Cut, Hierarchy, NodeId};
use crate::lca::LcaIndex;
use crate::nr::{uniform_pair, ErmEngine};
use crate::oracle::{pair_at, pair_total, Halted, NodeLabeler, PairOracle};
use rand::seq::index;
use rand::Rng;
use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct BfRun {
    pub cut: Cut,
    pub node_queries: usize,
    /// Queried nodes in order, with their labels.
    pub trace: Vec<(NodeId, bool)>,
    /// The labeler stopped early; `cut` is the current frontier.
    pub halted: bool,
}

/// Queries the root; a node labeled 1 becomes a cluster, a node labeled 0
/// has both children queued. On a halt, every queued node becomes a cluster.
pub fn run_bf<L: NodeLabeler + ?Sized>(h: &Hierarchy, labeler: &mut L) -> BfRun {
    let mut clusters = Vec::new();
    let mut trace = Vec::new();
    let mut queue = VecDeque::from([h.root()]);
    let mut halted = false;
    while let Some(v) = queue.pop_front() {
        let Some([l, r]) = h.children(v) else {
            clusters.push(v);
            continue;
        };
        match labeler.label(h, v) {
            Ok(true) => {
                trace.push((v, true));
                clusters.push(v);
            }
            Ok(false) => {
                trace.push((v, false));
                queue.push_back(l);
                queue.push_back(r);
            }
            Err(Halted::Budget | Halted::Stopped) => {
                clusters.push(v);
                halted = true;
                break;
            }
        }
    }
    clusters.extend(queue);
    BfRun { cut: Cut::new(clusters), node_queries: trace.len(), trace, halted }
}

#[derive(Debug, Clone)]
pub struct ErmRun {
    pub cut: Cut,
    pub clustering: Clustering,
    pub queries: u64,
    pub cost: f64,
}

/// Labels `m` uniformly drawn pairs and returns the cut of minimum
/// disagreement on them. Without replacement, `m` is capped at `C(n,2)`.
pub fn run_erm<O: PairOracle + ?Sized, R: Rng + ?Sized>(
    h: &Hierarchy,
    lca: &LcaIndex,
    oracle: &O,
    m: u64,
    with_replacement: bool,
    rng: &mut R,
) -> ErmRun {
    let n = h.n_leaves();
    let mut engine = ErmEngine::new(h, lca);
    let mut queries = 0;
    let mut feed = |a, b, engine: &mut ErmEngine| match oracle.answer(a, b) {
        Ok(s) => {
            engine.add_weight(a, b, s.value() as f64).expect("distinct leaves");
            queries += 1;
            true
        }
        Err(_) => false,
    };
    if with_replacement {
        for _ in 0..m {
            let (a, b) = uniform_pair(n, rng);
            if !feed(a, b, &mut engine) {
                break;
            }
        }
    } else {
        let total = pair_total(n);
        for k in index::sample(rng, total as usize, m.min(total) as usize) {
            let (a, b) = pair_at(k as u64, n);
            if !feed(a, b, &mut engine) {
                break;
            }
        }
    }
    let cut = engine.current_cut();
    ErmRun { clustering: h.cut_to_clustering(&cut).expect("engine cut is valid"), cut, queries, cost: engine.current_cost() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{CutLabeler, Metered, PartitionMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn root_cluster_one_query() {
        let h = Hierarchy::from_parents(&[Some(4), Some(4), Some(5), Some(5), Some(6), Some(6), None], vec![]).unwrap();
        let mut lab = CutLabeler::new(&h, &Cut::new(vec![6]));
        let run = run_bf(&h, &mut lab);
        assert_eq!(run.node_queries, 1);
        assert_eq!(run.cut, Cut::new(vec![6]));
    }

    #[test]
    fn erm_without_samples_is_singletons() {
        let h = Hierarchy::from_parents(&[Some(2), Some(2), None], vec![]).unwrap();
        let lca = LcaIndex::new(&h);
        let o = Metered::new(PartitionMatrix::new(vec![0, 0]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let run = run_erm(&h, &lca, &o, 0, true, &mut rng);
        assert_eq!(run.clustering.k(), 2);
        let run = run_erm(&h, &lca, &o, 1, false, &mut rng);
        assert_eq!(run.clustering.k(), 1);
    }
}
