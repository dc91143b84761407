//! Selective sampling on a noisy stream: the sampler labels a shrinking
//! fraction of pairs as the best cut becomes clear.
//!
//! `cargo run --release --example selective_sampling -- [n] [lambda] [rounds]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecut::eval::hamming_distance;
use treecut::harness::{generate_tree, TreeKind};
use treecut::nr::{run_nr, NrStop, SamplerConfig};
use treecut::oracle::{Metered, NoiseConfig, NoisyMatrix, PartitionMatrix};
use treecut::LcaIndex;

fn main() -> treecut::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(512, |s| s.parse().expect("n"));
    let lambda: f64 = args.next().map_or(0.1, |s| s.parse().expect("lambda"));
    let rounds: u64 = args.next().map_or(200_000, |s| s.parse().expect("rounds"));
    let h = generate_tree(TreeKind::Full, n.next_power_of_two(), 0)?;
    let target = h.cut_at_depth(4);
    let matrix = NoisyMatrix::new(PartitionMatrix::planted(&h, &target)?, NoiseConfig::new(lambda, 5))?;
    let oracle = Metered::new(&matrix);
    let lca = LcaIndex::new(&h);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = SamplerConfig::scaled(0.1);
    let run = run_nr(&h, &lca, &oracle, &cfg, NrStop { query_budget: None, max_rounds: rounds }, true, &mut rng)?;

    println!("{:>9} {:>9} {:>8} {:>10}", "round", "queries", "rate", "cost");
    // rate = fraction of rounds queried since the previous row
    let (mut last_t, mut last_q) = (0, 0);
    for r in run.trace.iter().filter(|r| r.t.is_power_of_two() || r.t == rounds) {
        let rate = (r.cum_queries - last_q) as f64 / (r.t - last_t) as f64;
        println!("{:>9} {:>9} {:>8.3} {:>10.1}", r.t, r.cum_queries, rate, r.cost);
        (last_t, last_q) = (r.t, r.cum_queries);
    }
    let err = hamming_distance(&matrix, &run.clustering, &mut rng)?.fraction(h.n_leaves());
    println!("K={} (planted {}), disagreement with the noisy oracle {err:.4} (noise {lambda})", run.clustering.k(), target.k());
    Ok(())
}
