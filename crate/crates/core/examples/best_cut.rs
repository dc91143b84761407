//! Best cut in hindsight: when class labels do not align with any cut, the
//! cut of minimum pairwise disagreement is found by one bottom-up pass.
//!
//! `cargo run --example best_cut -- [n] [classes]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treecut::eval::{best_cut_labels, partition_distance};
use treecut::harness::{generate_tree, TreeKind};

fn main() -> treecut::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(256, |s| s.parse().expect("n"));
    let classes: u32 = args.next().map_or(4, |s| s.parse().expect("classes"));
    let h = generate_tree(TreeKind::Full, n.next_power_of_two(), 0)?;
    let n = h.n_leaves();
    // contiguous class blocks with 5% of leaves relabeled at random
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels: Vec<u32> = (0..n)
        .map(|i| if rng.gen_bool(0.05) { rng.gen_range(0..classes) } else { (i * classes as usize / n) as u32 })
        .collect();
    let best = best_cut_labels(&h, &labels)?;
    let membership = h.cut_membership(&best.cut)?;
    let d = partition_distance(&labels, &membership)?;
    assert_eq!(d as f64, best.d_h);
    println!("n={n} classes={classes}: best cut has K={} and disagrees on {:.4} of pairs", best.k, best.d_h / (n * (n - 1)) as f64);
    for depth in 0..=4 {
        let cut = h.cut_at_depth(depth);
        let d = partition_distance(&labels, &h.cut_membership(&cut)?)? as f64;
        println!("  depth-{depth} cut: K={:>3} disagreement {:.4}", cut.k(), d / (n * (n - 1)) as f64);
    }
    Ok(())
}
