//! Builds trees from Gaussian blobs with each linkage and reports how well
//! the best cut of each tree matches the blob labels.
//!
//! `cargo run --release --example linkage_tree -- [points] [blobs]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use treecut::eval::best_cut_labels;
use treecut::linkage::{agglomerate, tree_report, Linkage, PointSet, DEFAULT_MATRIX_CAP};

fn main() -> treecut::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(600, |s| s.parse().expect("points"));
    let blobs: usize = args.next().map_or(5, |s| s.parse().expect("blobs"));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 2.5).unwrap();
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let b = i % blobs;
        let angle = b as f64 / blobs as f64 * std::f64::consts::TAU;
        data.push((8.0 * angle.cos() + noise.sample(&mut rng)) as f32);
        data.push((8.0 * angle.sin() + noise.sample(&mut rng)) as f32);
        labels.push(b as u32);
    }
    let points = PointSet::new(2, data, None)?;
    println!("{:<9} {:>6} {:>9} {:>7} {:>9} {:>4} {:>9}", "linkage", "height", "avg depth", "std", "log2 N", "K", "best err");
    for linkage in [Linkage::Single, Linkage::Complete, Linkage::Median] {
        let d = agglomerate(&points, linkage, DEFAULT_MATRIX_CAP)?;
        let r = tree_report(&d.tree);
        let best = best_cut_labels(&d.tree, &labels)?;
        let err = best.d_h / (n * (n - 1)) as f64;
        println!(
            "{:<9} {:>6} {:>9.2} {:>7.2} {:>9.1} {:>4} {:>9.4}",
            format!("{linkage:?}").to_lowercase(),
            r.height,
            r.avg_depth,
            r.std_depth,
            r.log2_cuts,
            best.k,
            err
        );
    }
    Ok(())
}
