//! Independent brute-force references shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecut::nr::{uniform_pair, ErmEngine};
use treecut::{Cut, Hierarchy, LcaIndex, NodeId};

/// Eight-leaf example tree; x1..x8 are leaves 0..7.
///
/// ```text
///            8
///        9        10
///     11    12   5   14
///    0  13  3 4     6  7
///      1  2
/// ```
pub fn example_tree() -> Hierarchy {
    let mut ch = vec![None; 15];
    ch[8] = Some((9, 10));
    ch[9] = Some((11, 12));
    ch[10] = Some((5, 14));
    ch[11] = Some((0, 13));
    ch[12] = Some((3, 4));
    ch[13] = Some((1, 2));
    ch[14] = Some((6, 7));
    Hierarchy::from_children(&ch, (1..=8).map(|i| format!("x{i}")).collect()).unwrap()
}

/// Three-cluster cut of the example tree: {x1..x5}, {x6}, {x7, x8}.
pub fn example_cut() -> Cut {
    Cut::new(vec![9, 5, 14])
}

/// Random strongly binary tree built by merging random pairs of clusters,
/// so leaf ids are not in left-to-right order.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> Hierarchy {
    let mut live: Vec<usize> = (0..n).collect();
    let mut ch: Vec<Option<(usize, usize)>> = vec![None; n];
    while live.len() > 1 {
        live.shuffle(rng);
        let a = live.pop().unwrap();
        let b = live.pop().unwrap();
        ch.push(Some((a, b)));
        live.push(ch.len() - 1);
    }
    Hierarchy::from_children(&ch, vec![]).unwrap()
}

pub fn naive_children(h: &Hierarchy, v: NodeId) -> Option<(NodeId, NodeId)> {
    let kids: Vec<NodeId> = (0..h.n_nodes()).filter(|&u| h.parent(u) == Some(v)).collect();
    match kids.as_slice() {
        [] => None,
        [a, b] => Some((*a, *b)),
        _ => panic!("not binary"),
    }
}

/// Every cut of the subtree at `v`, by direct recursion.
pub fn enumerate_cuts_at(h: &Hierarchy, v: NodeId) -> Vec<Vec<NodeId>> {
    let mut out = vec![vec![v]];
    if let Some((l, r)) = naive_children(h, v) {
        let left = enumerate_cuts_at(h, l);
        let right = enumerate_cuts_at(h, r);
        for a in &left {
            for b in &right {
                out.push(a.iter().chain(b).copied().collect());
            }
        }
    }
    out
}

pub fn enumerate_cuts(h: &Hierarchy) -> Vec<Cut> {
    enumerate_cuts_at(h, h.root()).into_iter().map(Cut::new).collect()
}

pub fn naive_ancestors_or_self(h: &Hierarchy, mut v: NodeId) -> Vec<NodeId> {
    let mut out = vec![v];
    while let Some(p) = h.parent(v) {
        out.push(p);
        v = p;
    }
    out
}

pub fn naive_lca(h: &Hierarchy, a: NodeId, b: NodeId) -> NodeId {
    let up = naive_ancestors_or_self(h, a);
    naive_ancestors_or_self(h, b).into_iter().find(|v| up.contains(v)).unwrap()
}

pub fn naive_leaves(h: &Hierarchy, v: NodeId) -> Vec<NodeId> {
    match naive_children(h, v) {
        None => vec![v],
        Some((l, r)) => {
            let mut x = naive_leaves(h, l);
            x.extend(naive_leaves(h, r));
            x.sort_unstable();
            x
        }
    }
}

/// Cluster index per leaf under `cut`.
pub fn naive_membership(h: &Hierarchy, cut: &Cut) -> Vec<usize> {
    let mut m = vec![usize::MAX; h.n_leaves()];
    for (k, &c) in cut.nodes().iter().enumerate() {
        for l in naive_leaves(h, c) {
            assert_eq!(m[l], usize::MAX, "overlapping cut");
            m[l] = k;
        }
    }
    assert!(m.iter().all(|&x| x != usize::MAX), "cut does not cover");
    m
}

/// Whether `v` is at or below some member of `cut`.
pub fn is_below(h: &Hierarchy, cut: &Cut, v: NodeId) -> bool {
    naive_ancestors_or_self(h, v).iter().any(|u| cut.contains(*u))
}

/// Nodes above the cut whose two children are leaves plus internal cut
/// members, i.e. the leaves of the pruned tree over above-and-member nodes
/// that are not leaves of the original tree.
pub fn naive_k_tilde(h: &Hierarchy, cut: &Cut) -> usize {
    (0..h.n_nodes())
        .filter(|&v| !h.is_leaf(v))
        .filter(|&v| {
            if cut.contains(v) {
                return true;
            }
            let above = !is_below(h, cut, v);
            above && naive_children(h, v).is_some_and(|(l, r)| h.is_leaf(l) && h.is_leaf(r))
        })
        .count()
}

/// Cost of a cut under weighted pair additions: a positive weight is paid
/// when the pair is split, a negative one when it is kept together.
pub fn brute_cost(h: &Hierarchy, cut: &Cut, adds: &[(usize, usize, f64)]) -> f64 {
    let m = naive_membership(h, cut);
    adds.iter()
        .map(|&(a, b, w)| {
            let same = m[a] == m[b];
            if w >= 0.0 {
                if same { 0.0 } else { w }
            } else if same {
                -w
            } else {
                0.0
            }
        })
        .sum()
}

pub fn brute_min_cost(h: &Hierarchy, cuts: &[Cut], adds: &[(usize, usize, f64)], together: Option<(usize, usize, bool)>) -> f64 {
    cuts.iter()
        .filter(|c| {
            together.map_or(true, |(a, b, same)| {
                let m = naive_membership(h, c);
                (m[a] == m[b]) == same
            })
        })
        .map(|c| brute_cost(h, c, adds))
        .fold(f64::INFINITY, f64::min)
}

/// Ordered-pair disagreement between a cut and per-leaf labels.
pub fn brute_label_distance(h: &Hierarchy, cut: &Cut, labels: &[u32]) -> u64 {
    let m = naive_membership(h, cut);
    let n = labels.len();
    let mut d = 0;
    for a in 0..n {
        for b in 0..n {
            if a != b && (m[a] == m[b]) != (labels[a] == labels[b]) {
                d += 1;
            }
        }
    }
    d
}

/// Replays a random weight sequence on a random tree, comparing every
/// engine answer with enumeration over all cuts.
pub fn check_engine_sequence(seed: u64, integer: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=12);
    let h = random_tree(n, &mut rng);
    let lca = LcaIndex::new(&h);
    let cuts = enumerate_cuts(&h);
    let mut e = ErmEngine::new(&h, &lca);
    let mut adds = Vec::new();
    let tol = if integer { 0.0 } else { 1e-9 };
    let close = |a: f64, b: f64| (a - b).abs() <= tol * b.abs().max(1.0);
    for _ in 0..rng.gen_range(1..30) {
        let (a, b) = uniform_pair(n, &mut rng);
        let w = if integer {
            rng.gen_range(-3i32..=3) as f64
        } else {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign / rng.gen_range(0.01..1.0)
        };
        adds.push((a, b, w));
        let cost = e.add_weight(a, b, w).unwrap();
        assert_eq!(e.last_touched(), h.depth(naive_lca(&h, a, b)) + 1);
        let brute = brute_min_cost(&h, &cuts, &adds, None);
        assert!(close(cost, brute), "cost {cost} vs {brute}");
        assert!(close(brute_cost(&h, &e.current_cut(), &adds), brute));

        let (x, y) = uniform_pair(n, &mut rng);
        let before = serde_json::to_vec(&e.snapshot()).unwrap();
        for same in [true, false] {
            let c = e.constrained_cost(x, y, same).unwrap();
            let brute = brute_min_cost(&h, &cuts, &adds, Some((x, y, same)));
            assert!(close(c, brute), "constrained {c} vs {brute}");
            assert_eq!(serde_json::to_vec(&e.snapshot()).unwrap(), before);
        }
        let m = naive_membership(&h, &e.current_cut());
        assert_eq!(e.same_cluster(x, y).unwrap(), m[x] == m[y]);
    }
}
