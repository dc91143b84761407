//! The hard prior family: B frontier nodes decided by fair coins. Any
//! learner needs about B queries on average; path search uses between
//! B and 2B because every sampled cut has B <= K~ <= 2B.
//!
//! `cargo run --release --example lower_bound -- [n]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecut::harness::{generate_tree, TreeKind};
use treecut::oracle::CutLabeler;
use treecut::wdp::run_wdp;
use treecut::{k_tilde, AdversarialPrior};

fn main() -> treecut::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(256, |s| s.parse().expect("n"));
    let h = generate_tree(TreeKind::Full, n.next_power_of_two(), 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    println!("{:>4} {:>10} {:>10} {:>10}", "B", "mean K~", "mean qry", "max qry");
    for b in [2, 4, 8, 16, 32] {
        let adv = AdversarialPrior::new(&h, b)?;
        let (mut kt, mut q, mut worst) = (0, 0, 0);
        let trials = 200;
        for _ in 0..trials {
            let cut = adv.sample(&h, &mut rng);
            kt += k_tilde(&h, &cut)?;
            let run = run_wdp(&h, &adv.prior, &mut CutLabeler::new(&h, &cut));
            assert_eq!(run.cut, cut);
            q += run.node_queries;
            worst = worst.max(run.node_queries);
        }
        let t = trials as f64;
        println!("{b:>4} {:>10.2} {:>10.2} {worst:>10}", kt as f64 / t, q as f64 / t);
    }
    Ok(())
}
