//! Prior-guided path search on a noiseless oracle: query count against the
//! number of paths searched, and per-search cost against the prior mass of
//! the crossing point.
//!
//! `cargo run --release --example weighted_dichotomic_path -- [n] [alpha]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecut::harness::{generate_tree, TreeKind};
use treecut::oracle::CutLabeler;
use treecut::wdp::run_wdp;
use treecut::{k_tilde, Prior};

fn main() -> treecut::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(2048, |s| s.parse().expect("n"));
    let alpha: f64 = args.next().map_or(0.3, |s| s.parse().expect("alpha"));
    let h = generate_tree(TreeKind::Random, n, 3)?;
    let prior = Prior::constant(&h, alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut queries, mut searches, mut within) = (0, 0, 0);
    for _ in 0..20 {
        let target = prior.sample_cut(&h, &mut rng);
        let run = run_wdp(&h, &prior, &mut CutLabeler::new(&h, &target));
        assert_eq!(run.cut, target);
        assert_eq!(run.searches.len(), k_tilde(&h, &target)?);
        queries += run.node_queries;
        searches += run.searches.len();
        within += run.searches.iter().filter(|s| s.queries as f64 <= (1.0 / s.cut_mass).log2().ceil()).count();
    }
    println!("n={n} constant prior {alpha}: 20 cuts sampled from the prior, all recovered");
    println!("{searches} searches, {queries} node queries ({:.2} per search)", queries as f64 / searches as f64);
    println!("{within}/{searches} searches used at most ceil(log2 1/q) queries");
    Ok(())
}
