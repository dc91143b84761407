//! Prior-free search: each query at least a third-splits the version space,
//! so a tree with N cuts needs at most log_{3/2} N queries.
//!
//! `cargo run --release --example one_third_splitting -- [n] [seed]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecut::harness::{generate_tree, TreeKind};
use treecut::oracle::CutLabeler;
use treecut::ots::run_ots;
use treecut::Prior;

fn main() -> treecut::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(4096, |s| s.parse().expect("n"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let h = generate_tree(TreeKind::Random, n, seed)?;
    let counts = h.count_cuts();
    let target = Prior::uniform(&h, &counts).sample_cut(&h, &mut ChaCha8Rng::seed_from_u64(seed));

    let mut labeler = CutLabeler::new(&h, &target);
    let run = run_ots(&h, &mut labeler);
    assert_eq!(run.cut, target);

    let bound = counts.log2_total() / 1.5f64.log2();
    let worst = run
        .steps
        .iter()
        .map(|s| {
            let kept = if s.answer { &s.size_if_one } else { &s.size_if_zero };
            treecut::hierarchy::log2_big(kept) - treecut::hierarchy::log2_big(&s.local_size)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    println!("n={n}  K={}  log2 N={:.1}", target.k(), counts.log2_total());
    println!("queries {} (bound {:.1}), nodes touched {}", run.queries(), bound, run.nodes_touched);
    println!("largest kept fraction of a local version space: {:.3}", worst.exp2());
    Ok(())
}
