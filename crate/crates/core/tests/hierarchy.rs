mod common;

use common::*;
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecut::harness::{generate_tree, TreeKind};
use treecut::{Cut, Error, Hierarchy, LcaIndex};

#[test]
fn example_tree_counts() {
    let h = example_tree();
    let c = h.count_cuts();
    assert_eq!(c.total(), &BigUint::from(22u32));
    assert_eq!(c.get(9), &BigUint::from(7u32));
    assert_eq!(c.get(10), &BigUint::from(3u32));
    assert_eq!(enumerate_cuts(&h).len(), 22);
}

#[test]
fn line_and_full_counts() {
    for n in 2..40 {
        let h = generate_tree(TreeKind::Line, n, 0).unwrap();
        assert_eq!(h.count_cuts().total(), &BigUint::from(n));
    }
    let h = generate_tree(TreeKind::Full, 8, 0).unwrap();
    assert_eq!(h.count_cuts().total(), &BigUint::from(26u32));
}

#[test]
fn counts_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 2..=12 {
        for _ in 0..10 {
            let h = random_tree(n, &mut rng);
            let cuts = enumerate_cuts(&h);
            assert_eq!(h.count_cuts().total(), &BigUint::from(cuts.len()));
            for c in &cuts {
                h.validate_cut(c).unwrap();
            }
        }
    }
}

#[test]
fn example_cut_clustering() {
    let h = example_tree();
    let c = h.cut_to_clustering(&example_cut()).unwrap();
    assert_eq!(c.clusters(), &[vec![0, 1, 2, 3, 4], vec![5], vec![6, 7]]);
    // {x1,x2,x3},{x4,x5,x6},{x7,x8} is not realized
    let target = [0u32, 0, 0, 1, 1, 1, 2, 2];
    assert!(enumerate_cuts(&h).iter().all(|c| h.cut_membership(c).unwrap() != target));
}

#[test]
fn invalid_cuts_rejected() {
    let h = example_tree();
    assert!(matches!(h.validate_cut(&Cut::new(vec![9, 11, 10])), Err(Error::InvalidCut(_))));
    assert!(matches!(h.validate_cut(&Cut::new(vec![9])), Err(Error::InvalidCut(_))));
    assert!(h.validate_cut(&Cut::new(vec![99])).is_err());
}

#[test]
fn parent_array_errors() {
    assert!(matches!(Hierarchy::from_parents(&[Some(1), None], vec![]), Err(Error::NotBinary { .. }) | Err(Error::TooFewLeaves)));
    assert!(matches!(Hierarchy::from_parents(&[Some(2), Some(2), None, None], vec![]), Err(Error::MultipleRoots(_))));
    assert!(matches!(Hierarchy::from_parents(&[Some(3), Some(3), Some(3), None], vec![]), Err(Error::NotBinary { .. })));
    assert!(Hierarchy::from_parents(&[Some(2), Some(2), None], vec!["a".into()]).is_err());
    let h = Hierarchy::from_parents(&[Some(2), Some(2), None], vec!["a".into(), "b".into()]).unwrap();
    assert_eq!(h.payload(1), "b");
}

#[test]
fn depth_stats_and_siblings() {
    let full = generate_tree(TreeKind::Full, 8, 0).unwrap();
    let s = full.leaf_depth_stats();
    assert_eq!((s.avg_depth, s.std_depth, s.height), (3.0, 0.0, 3));
    assert_eq!(full.sibling_leaf_count(), 4);
    let h = example_tree();
    assert_eq!(h.sibling_leaf_count(), 3);
    assert_eq!(h.height(), 4);
}

#[test]
fn file_round_trip() {
    let h = example_tree();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.json");
    h.save(&p).unwrap();
    let g = Hierarchy::load(&p).unwrap();
    assert_eq!(g.parent_array(), h.parent_array());
    assert_eq!(g.payloads(), h.payloads());
}

fn arb_tree() -> impl Strategy<Value = Hierarchy> {
    (2usize..40, any::<u64>()).prop_map(|(n, s)| random_tree(n, &mut ChaCha8Rng::seed_from_u64(s)))
}

proptest! {
    #[test]
    fn structure_invariants(h in arb_tree()) {
        let n = h.n_leaves();
        prop_assert_eq!(h.n_nodes(), 2 * n - 1);
        prop_assert!((0..n).all(|v| h.is_leaf(v)));
        prop_assert!(h.internal_nodes().all(|v| !h.is_leaf(v)));
        for v in 0..h.n_nodes() {
            let mut under = h.leaves_under(v).to_vec();
            under.sort_unstable();
            prop_assert_eq!(&under, &naive_leaves(&h, v));
            prop_assert_eq!(h.depth(v), naive_ancestors_or_self(&h, v).len() - 1);
            if let Some([l, r]) = h.children(v) {
                prop_assert_eq!(h.pair_count(v), (h.size(l) * h.size(r)) as u64);
                prop_assert_eq!(h.sibling(l), Some(r));
            }
        }
    }

    #[test]
    fn lca_matches_naive(h in arb_tree(), s in any::<u64>()) {
        let idx = LcaIndex::new(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        for _ in 0..50 {
            let a = rand::Rng::gen_range(&mut rng, 0..h.n_nodes());
            let b = rand::Rng::gen_range(&mut rng, 0..h.n_nodes());
            prop_assert_eq!(idx.lca(a, b), naive_lca(&h, a, b));
        }
    }

    #[test]
    fn node_pairs_cross_the_split(h in arb_tree(), s in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        for v in h.internal_nodes() {
            let (a, b) = h.sample_node_query(v, &mut rng).unwrap();
            prop_assert_eq!(naive_lca(&h, a, b), v);
            let k = rand::Rng::gen_range(&mut rng, 0..h.pair_count(v) as usize);
            let (a, b) = h.node_pair(v, k);
            prop_assert_eq!(naive_lca(&h, a, b), v);
        }
    }

    #[test]
    fn cut_clusterings_partition(h in arb_tree(), d in 0usize..6) {
        let cut = h.cut_at_depth(d);
        h.validate_cut(&cut).unwrap();
        let c = h.cut_to_clustering(&cut).unwrap();
        prop_assert!(c.is_partition_of(h.n_leaves()));
        prop_assert_eq!(c.k(), cut.k());
        let m = naive_membership(&h, &cut);
        let mine = h.cut_membership(&cut).unwrap();
        for a in 0..h.n_leaves() {
            for b in 0..h.n_leaves() {
                prop_assert_eq!(m[a] == m[b], mine[a] == mine[b]);
            }
        }
    }
}
