//! The two reference learners: breadth-first node search and empirical risk
//! minimization over uniformly sampled pairs.
//!
//! `cargo run --release --example baselines -- [n] [budget]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecut::baselines::{run_bf, run_erm};
use treecut::eval::clustering_distance;
use treecut::harness::{generate_tree, TreeKind};
use treecut::oracle::{Metered, PairLabeler, PartitionMatrix};
use treecut::{LcaIndex, Prior};

fn main() -> treecut::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(1000, |s| s.parse().expect("n"));
    let budget: u64 = args.next().map_or(2000, |s| s.parse().expect("budget"));
    let h = generate_tree(TreeKind::Random, n, 2)?;
    let target = Prior::constant(&h, 0.2)?.sample_cut(&h, &mut ChaCha8Rng::seed_from_u64(4));
    let truth = h.cut_to_clustering(&target)?;
    let matrix = PartitionMatrix::planted(&h, &target)?;
    let pairs = (n * (n - 1)) as f64;

    let oracle = Metered::new(&matrix);
    let bf = run_bf(&h, &mut PairLabeler { oracle: &oracle, rng: ChaCha8Rng::seed_from_u64(0) });
    println!("bf : {} node queries, K={} (planted {}), exact={}", bf.node_queries, bf.cut.k(), target.k(), bf.cut == target);

    let lca = LcaIndex::new(&h);
    for m in [budget / 4, budget, budget * 4] {
        let oracle = Metered::new(&matrix);
        let erm = run_erm(&h, &lca, &oracle, m, false, &mut ChaCha8Rng::seed_from_u64(m));
        let d = clustering_distance(&erm.clustering, &truth, n)? as f64 / pairs;
        println!("erm: {m:>6} pairs, K={:>4}, distance to planted {d:.4}", erm.cut.k());
    }
    Ok(())
}
