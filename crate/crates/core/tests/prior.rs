mod common;

use common::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use treecut::prior::{AdversarialPrior, PriorFile, PriorKind};
use treecut::{k_tilde, Cut, Hierarchy, Prior};

/// Exact product-form probability with `Pr(v) = 1/N(v)`.
fn uniform_rational(h: &Hierarchy, cut: &Cut) -> BigRational {
    let counts = h.count_cuts();
    let mut p = BigRational::one();
    for v in 0..h.n_nodes() {
        let inv = BigRational::new(BigInt::one(), BigInt::from(counts.get(v).clone()));
        if cut.contains(v) {
            p *= inv;
        } else if !is_below(h, cut, v) {
            p *= BigRational::one() - inv;
        }
    }
    p
}

#[test]
fn example_cut_is_one_in_22() {
    let h = example_tree();
    let green = example_cut();
    assert_eq!(uniform_rational(&h, &green), BigRational::new(1.into(), 22.into()));
    let p = Prior::uniform(&h, &h.count_cuts());
    assert!((p.cut_probability(&h, &green).unwrap() - 1.0 / 22.0).abs() < 1e-15);
    // the caption's factors: (1-1/22)(1-1/3)(1/7)*1*(1/2)
    assert!((p.get(8) - 1.0 / 22.0).abs() < 1e-15);
    assert!((p.get(10) - 1.0 / 3.0).abs() < 1e-15);
    assert!((p.get(9) - 1.0 / 7.0).abs() < 1e-15);
    assert_eq!(p.get(5), 1.0);
    assert!((p.get(14) - 0.5).abs() < 1e-15);
}

#[test]
fn uniform_is_uniform_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 2..=9 {
        let h = random_tree(n, &mut rng);
        let cuts = enumerate_cuts(&h);
        let target = BigRational::new(1.into(), BigInt::from(cuts.len()));
        for c in &cuts {
            assert_eq!(uniform_rational(&h, c), target);
        }
    }
}

#[test]
fn probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.gen_range(2..=10);
        let h = random_tree(n, &mut rng);
        let values = (0..h.n_nodes()).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let p = Prior::explicit(&h, values).unwrap();
        let cuts = enumerate_cuts(&h);
        let total: f64 = cuts.iter().map(|c| p.cut_probability(&h, c).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12, "sum {total}");
        // MAP equals the enumerated argmax
        let best = cuts.iter().map(|c| p.cut_probability(&h, c).unwrap()).fold(0.0, f64::max);
        let map = p.cut_probability(&h, &p.map_cut(&h)).unwrap();
        assert!((map - best).abs() <= 1e-12 * best.max(1e-300));
    }
}

#[test]
fn log_probability_agrees() {
    let h = example_tree();
    let p = Prior::constant(&h, 0.3).unwrap();
    for c in enumerate_cuts(&h) {
        let a = p.cut_probability(&h, &c).unwrap();
        let b = p.log_cut_probability(&h, &c).unwrap();
        assert!((a.ln() - b).abs() < 1e-12);
    }
}

#[test]
fn sampling_follows_the_prior() {
    let h = example_tree();
    let p = Prior::constant(&h, 0.4).unwrap();
    let cuts = enumerate_cuts(&h);
    let mut counts = vec![0u64; cuts.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let draws = 40_000;
    for _ in 0..draws {
        let c = p.sample_cut(&h, &mut rng);
        counts[cuts.iter().position(|x| *x == c).unwrap()] += 1;
    }
    let chi2: f64 = cuts
        .iter()
        .zip(&counts)
        .map(|(c, &o)| {
            let e = draws as f64 * p.cut_probability(&h, c).unwrap();
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let pval = 1.0 - ChiSquared::new((cuts.len() - 1) as f64).unwrap().cdf(chi2);
    assert!(pval > 1e-3, "chi2 {chi2}, p {pval}");
}

#[test]
fn k_tilde_matches_definition() {
    let h = example_tree();
    assert_eq!(k_tilde(&h, &example_cut()).unwrap(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in 2..=10 {
        let h = random_tree(n, &mut rng);
        let mut worst = 0;
        for c in enumerate_cuts(&h) {
            let k = k_tilde(&h, &c).unwrap();
            assert_eq!(k, naive_k_tilde(&h, &c));
            assert!(k <= c.k());
            worst = worst.max(k);
        }
        assert_eq!(worst, h.sibling_leaf_count());
    }
}

#[test]
fn adversarial_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let h = random_tree(rng.gen_range(16..60), &mut rng);
        let ls = h.sibling_leaf_count();
        for b in [2usize, 4, 8].into_iter().filter(|&b| b <= ls) {
            let adv = AdversarialPrior::new(&h, b).unwrap();
            assert_eq!(adv.budget(), b);
            let mut mass = 0.0;
            for mask in 0..(1u64 << b) {
                let c = adv.support_cut(&h, mask);
                h.validate_cut(&c).unwrap();
                let k = k_tilde(&h, &c).unwrap();
                assert!(b <= k && k <= 2 * b);
                let p = adv.exact.cut_probability(&h, &c).unwrap();
                assert!((p - 0.5f64.powi(b as i32)).abs() < 1e-12);
                mass += p;
            }
            assert!((mass - 1.0).abs() < 1e-12);
            for _ in 0..20 {
                let k = k_tilde(&h, &adv.sample(&h, &mut rng)).unwrap();
                assert!(b <= k && k <= 2 * b);
            }
            assert!(adv.prior.values().iter().all(|&x| x > 0.0 && x <= 1.0));
        }
        assert!(AdversarialPrior::new(&h, ls + 1).is_err());
    }
}

#[test]
fn prior_file_resolution() {
    let h = example_tree();
    let f = PriorFile { kind: PriorKind::Constant, alpha: Some(0.25), values: None };
    let p = f.resolve(&h).unwrap();
    assert_eq!(p.get(8), 0.25);
    assert_eq!(p.get(0), 1.0);
    let u = PriorFile { kind: PriorKind::Uniform, alpha: None, values: None }.resolve(&h).unwrap();
    assert!((u.get(8) - 1.0 / 22.0).abs() < 1e-15);
    assert!(Prior::explicit(&h, vec![0.5; 3]).is_err());
}
