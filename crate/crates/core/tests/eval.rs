mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use treecut::eval::*;
use treecut::oracle::{pair_index, NoiseConfig, NoisyMatrix, PartitionMatrix, Sign, SimilarityMatrix, Structure};
use treecut::{Clustering, LcaIndex};

/// Hides the partition so evaluation falls back to scanning or sampling.
struct Opaque<M>(M);

impl<M: SimilarityMatrix> SimilarityMatrix for Opaque<M> {
    fn n(&self) -> usize {
        self.0.n()
    }
    fn sigma(&self, a: usize, b: usize) -> Sign {
        self.0.sigma(a, b)
    }
    fn structure(&self) -> Structure<'_> {
        Structure::Opaque
    }
}

#[test]
fn best_cut_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let n = rng.gen_range(2..=12);
        let h = random_tree(n, &mut rng);
        let k = rng.gen_range(1..=4);
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let best = best_cut_labels(&h, &labels).unwrap();
        let brute = enumerate_cuts(&h).iter().map(|c| brute_label_distance(&h, c, &labels)).min().unwrap();
        assert_eq!(best.d_h, brute as f64);
        assert_eq!(brute_label_distance(&h, &best.cut, &labels), brute);
        assert_eq!(best.k, best.cut.k());
    }
}

#[test]
fn histogram_table_equals_pair_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let n = rng.gen_range(2..40);
        let h = random_tree(n, &mut rng);
        let lca = LcaIndex::new(&h);
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let a = PairCountTable::from_labels(&h, &labels).unwrap();
        let b = PairCountTable::from_matrix(&h, &lca, &Opaque(PartitionMatrix::new(labels.clone()))).unwrap();
        assert_eq!(a, b);
        assert_eq!(best_cut(&h, &a), best_cut(&h, &b));

        let noisy = NoisyMatrix::new(PartitionMatrix::new(labels), NoiseConfig::new(0.2, 7)).unwrap();
        let c = PairCountTable::from_matrix(&h, &lca, &noisy).unwrap();
        let d = PairCountTable::from_matrix(&h, &lca, &Opaque(noisy)).unwrap();
        assert_eq!(c, d);
    }
}

#[test]
fn labels_extremes() {
    let h = random_tree(9, &mut ChaCha8Rng::seed_from_u64(0));
    let same = best_cut_labels(&h, &[3; 9]).unwrap();
    assert_eq!((same.cut.nodes(), same.d_h), (&[h.root()][..], 0.0));
    let distinct: Vec<u32> = (0..9).collect();
    let b = best_cut_labels(&h, &distinct).unwrap();
    assert_eq!((b.k, b.d_h), (9, 0.0));
    assert!(best_cut_labels(&h, &[0; 3]).is_err());
}

#[test]
fn excess_risk_direct_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.gen_range(2..=10);
        let h = random_tree(n, &mut rng);
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let reference = PartitionMatrix::new(labels.clone());
        let best = best_cut_labels(&h, &labels).unwrap();
        let best_d = hamming_distance(&reference, &h.cut_to_clustering(&best.cut).unwrap(), &mut rng).unwrap();
        assert_eq!(best_d.ordered_pairs, best.d_h);
        let best_m = naive_membership(&h, &best.cut);
        for c in enumerate_cuts(&h) {
            let cand = h.cut_to_clustering(&c).unwrap();
            let d = hamming_distance(&reference, &cand, &mut rng).unwrap();
            let r = excess_risk(&d, &best_d, n);
            assert!(r >= 0.0);
            // probability of disagreement under uniform pairs from L x L
            let m = naive_membership(&h, &c);
            let mut p_c = 0.0;
            let mut p_b = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let truth = labels[a] == labels[b];
                    p_c += ((m[a] == m[b]) != truth) as u8 as f64;
                    p_b += ((best_m[a] == best_m[b]) != truth) as u8 as f64;
                }
            }
            assert!((r - (p_c - p_b) / (n * n) as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn monte_carlo_for_large_opaque() {
    let n = 5000;
    let labels: Vec<u32> = (0..n as u32).map(|i| i % 10).collect();
    let reference = Opaque(PartitionMatrix::new(labels.clone()));
    let cand = Clustering::from_labels(&(0..n as u32).map(|i| i % 5).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let est = hamming_distance(&reference, &cand, &mut rng).unwrap();
    let exact = hamming_distance(&PartitionMatrix::new(labels), &cand, &mut rng).unwrap();
    assert!(!est.exact && exact.exact);
    assert!((est.ordered_pairs - exact.ordered_pairs).abs() < 4.0 * est.ci95.unwrap());
}

#[test]
fn universe_mismatch() {
    let r = PartitionMatrix::new(vec![0, 0, 1]);
    let c = Clustering::new(vec![vec![0, 1]]);
    assert!(hamming_distance(&r, &c, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    assert!(partition_distance(&[0, 1], &[0]).is_err());
}

#[test]
fn pair_samples_are_disjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let val = PairSample::draw(100, 500, None, &mut rng);
    let test = PairSample::draw(100, 2000, Some(&val), &mut rng);
    let a: HashSet<u64> = val.pairs.iter().map(|&(x, y)| pair_index(x, y, 100)).collect();
    assert_eq!(a.len(), 500);
    assert!(test.pairs.iter().all(|&(x, y)| x < y && !a.contains(&pair_index(x, y, 100))));
    // asking for more than exist returns all remaining pairs
    let all = PairSample::draw(5, 100, None, &mut rng);
    assert_eq!(all.pairs.len(), 10);
}

proptest! {
    #[test]
    fn partition_distance_matches_scan(a in prop::collection::vec(0u32..4, 1..40), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<u32> = a.iter().map(|_| rng.gen_range(0..4)).collect();
        let mut d = 0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                if i != j && (a[i] == a[j]) != (b[i] == b[j]) {
                    d += 1;
                }
            }
        }
        prop_assert_eq!(partition_distance(&a, &b).unwrap(), d);
        prop_assert_eq!(partition_distance(&a, &a).unwrap(), 0);
    }

    #[test]
    fn noisy_reference_distance_matches_scan(n in 2usize..60, l in 0.0f64..0.5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let noisy = NoisyMatrix::new(PartitionMatrix::new(base), NoiseConfig::new(l, seed)).unwrap();
        let cand = Clustering::from_labels(&(0..n).map(|_| rng.gen_range(0..3u32)).collect::<Vec<_>>());
        let a = hamming_distance(&noisy, &cand, &mut rng).unwrap();
        let b = hamming_distance(&Opaque(&noisy), &cand, &mut rng).unwrap();
        prop_assert_eq!(a.ordered_pairs, b.ordered_pairs);
    }
}
