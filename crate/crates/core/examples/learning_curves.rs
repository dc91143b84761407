//! Learning curves on a noisy planted instance: every algorithm is tuned on
//! 500 validation pairs at each budget, then scored on the remaining pairs.
//!
//! `cargo run --release --example learning_curves -- [n] [trials] [algos,...]`

use treecut::harness::*;
use treecut::oracle::NoiseMode;

fn main() -> treecut::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(2048, |s| s.parse().expect("n"));
    let trials: usize = args.next().map_or(10, |s| s.parse().expect("trials"));
    let algos: Vec<AlgoKind> = args
        .next()
        .unwrap_or_else(|| "nwdp,nr,erm,bf".into())
        .split(',')
        .map(|a| a.parse().expect("algorithm"))
        .collect();
    let depth = 5; // 32 clusters
    let spec = ExperimentSpec {
        tree: TreeSource::Generate { kind: TreeKind::Full, n, seed: 0 },
        oracle: OracleSpec {
            truth: TruthSpec::Planted(PlantSpec::Depth { depth }),
            lambda: 0.1,
            noise_mode: NoiseMode::Auto,
        },
        algorithms: algos.into_iter().map(AlgorithmSpec::new).collect(),
        budgets: vec![1000, 2000, 4000, 8000],
        trials,
        seed: 7,
        seeds: None,
        validation_pairs: 500,
        jobs: None,
        output: None,
        summary: None,
    };
    let res = run_experiment(&spec)?;
    println!("{:<6} {:>7} {:>9} {:>12} {:>12} {:>8}", "algo", "budget", "queries", "test_error", "excess", "K");
    for s in summarize(&res.rows) {
        println!(
            "{:<6} {:>7} {:>9.0} {:>7.4}±{:.4} {:>12.5} {:>8.1}",
            s.algo, s.budget, s.queries_mean, s.test_error_mean, s.test_error_std, s.excess_risk_mean, s.k_out_mean
        );
    }
    let best = res.best.iter().map(|b| b.0).sum::<f64>() / res.best.len() as f64;
    println!("best cut in hindsight: test error {best:.4}");
    Ok(())
}
