mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treecut::harness::{generate_tree, TreeKind};
use treecut::oracle::{CutLabeler, Halted, Metered, NodeLabeler, NoiseConfig, NoisyMatrix, PartitionMatrix};
use treecut::wdp::{run_nwdp, run_wdp, small_nodes, write_trace, NwdpConfig, Wdp};
use treecut::{k_tilde, Cut, Hierarchy, Prior};

/// Every root-to-terminal path of every unexplored subtree carries total `q` of 1.
fn check_q_mass(h: &Hierarchy, w: &Wdp) {
    for r in w.forest_roots() {
        let mut stack = vec![(r, 0.0f64)];
        while let Some((v, acc)) = stack.pop() {
            let acc = acc + w.q(v);
            if w.is_terminal(v) {
                assert!((acc - 1.0).abs() < 1e-9, "path mass {acc}");
            } else {
                for c in h.children(v).unwrap() {
                    stack.push((c, acc));
                }
            }
        }
    }
}

fn priors(h: &Hierarchy) -> Vec<Prior> {
    vec![Prior::uniform(h, &h.count_cuts()), Prior::constant(h, 0.3).unwrap(), Prior::constant(h, 0.8).unwrap()]
}

#[test]
fn noiseless_recovery_and_search_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..120 {
        let n = rng.gen_range(2..80);
        let h = random_tree(n, &mut rng);
        for prior in priors(&h) {
            let target = prior.sample_cut(&h, &mut rng);
            let mut lab = CutLabeler::new(&h, &target);
            let mut w = Wdp::new(&h, &prior);
            check_q_mass(&h, &w);
            let mut searches = 0;
            while let Some(s) = w.step(&mut lab).unwrap() {
                searches += 1;
                check_q_mass(&h, &w);
                assert!(s.queries < s.path.len().max(1));
                assert!(s.queries as f64 <= ((1.0 / s.cut_mass).log2() - 1e-9).ceil());
                assert!(s.normalized_entropy >= -1e-12);
            }
            assert_eq!(w.cut(), target);
            assert_eq!(searches, k_tilde(&h, &target).unwrap());
        }
    }
}

#[test]
fn example_tree_two_searches() {
    let h = example_tree();
    let prior = Prior::uniform(&h, &h.count_cuts());
    let run = run_wdp(&h, &prior, &mut CutLabeler::new(&h, &example_cut()));
    assert_eq!(run.cut, example_cut());
    assert_eq!(run.searches.len(), 2);
    assert_eq!(run.contradictions, 0);
    let mut buf = Vec::new();
    write_trace(&run.searches, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("search_idx,path_leaf,path_len,entropy,normalized_entropy,queries,cut_node\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn line_tree_single_search() {
    // all-singletons cut on a line tree: one path, one search
    let h = generate_tree(TreeKind::Line, 50, 0).unwrap();
    let target = Cut::new((0..50).collect());
    let prior = Prior::uniform(&h, &h.count_cuts());
    let run = run_wdp(&h, &prior, &mut CutLabeler::new(&h, &target));
    assert_eq!(run.cut, target);
    assert_eq!(run.searches.len(), 1);
    assert!(run.node_queries <= 7);
}

#[test]
fn halted_run_returns_posterior_map() {
    struct Limited(CutLabeler, usize);
    impl NodeLabeler for Limited {
        fn label(&mut self, h: &Hierarchy, v: usize) -> Result<bool, Halted> {
            if self.1 == 0 {
                return Err(Halted::Budget);
            }
            self.1 -= 1;
            self.0.label(h, v)
        }
    }
    let h = generate_tree(TreeKind::Full, 32, 0).unwrap();
    let target = h.cut_at_depth(3);
    let prior = Prior::uniform(&h, &h.count_cuts());
    for budget in 0..12 {
        let truth = CutLabeler::new(&h, &target);
        let run = run_wdp(&h, &prior, &mut Limited(CutLabeler::new(&h, &target), budget));
        h.validate_cut(&run.cut).unwrap();
        if run.halted {
            assert_eq!(run.cut, run.posterior.map_cut(&h));
            // nodes revealed above the cut stay above in the MAP cut
            for v in h.internal_nodes().filter(|&v| run.posterior.get(v) == 0.0) {
                assert!(!is_below(&h, &run.cut, v) && !truth.truth(v));
            }
        }
    }
    let run = run_wdp(&h, &prior, &mut Limited(CutLabeler::new(&h, &target), 0));
    assert_eq!(run.cut, prior.map_cut(&h));
}

#[test]
fn small_node_threshold_and_votes() {
    let h = generate_tree(TreeKind::Full, 1024, 0).unwrap();
    let cfg = NwdpConfig { lambda: 0.1, ..NwdpConfig::default() };
    assert_eq!(cfg.vote_count(1024), (2.0 * (1024.0f64 / 0.05).ln() / 0.64).ceil() as usize);
    let t = cfg.small_node_threshold(1024);
    for v in small_nodes(&h, t) {
        assert!((h.pair_count(v) as f64) < t);
        assert!(h.parent(v).map_or(true, |p| h.pair_count(p) as f64 >= t));
    }
    let zero = NwdpConfig { lambda: 0.0, delta: 0.05, alpha: 0.0, ..NwdpConfig::default() };
    assert!(small_nodes(&h, zero.small_node_threshold(1024)).is_empty());
    assert!(NwdpConfig { lambda: 0.5, ..NwdpConfig::default() }.validate().is_err());
    assert!(NwdpConfig { votes: Some(0), ..NwdpConfig::default() }.validate().is_err());
}

#[test]
fn nwdp_noiseless_single_votes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let h = random_tree(rng.gen_range(2..60), &mut rng);
        let prior = Prior::uniform(&h, &h.count_cuts());
        let target = prior.sample_cut(&h, &mut rng);
        let m = Metered::new(PartitionMatrix::planted(&h, &target).unwrap());
        let cfg = NwdpConfig { alpha: 0.0, votes: Some(1), ..NwdpConfig::default() };
        let run = run_nwdp(&h, &prior, &m, &cfg, &mut rng).unwrap();
        assert_eq!(run.cut, target);
        assert_eq!(run.pair_queries as usize, run.wdp.node_queries);
    }
}

#[test]
fn nwdp_budget_is_respected() {
    let h = generate_tree(TreeKind::Full, 256, 0).unwrap();
    let target = h.cut_at_depth(3);
    let noisy = NoisyMatrix::new(PartitionMatrix::planted(&h, &target).unwrap(), NoiseConfig::new(0.1, 3)).unwrap();
    let m = Metered::new(noisy);
    let prior = Prior::uniform(&h, &h.count_cuts());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for budget in [0u64, 10, 100, 1000] {
        let cfg = NwdpConfig { lambda: 0.1, budget: Some(budget), ..NwdpConfig::default() };
        let run = run_nwdp(&h, &prior, &m, &cfg, &mut rng).unwrap();
        assert!(run.pair_queries <= budget);
        h.validate_cut(&run.cut).unwrap();
    }
}
