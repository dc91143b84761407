//! Drives a labeling session with a scripted "person" who knows a planted
//! clustering, through the same session calls the HTTP handlers use.
//!
//! cargo run -p treecut-service --example scripted_session -- [n] [algorithm]

use std::time::Duration;
use treecut::harness::{generate_tree, TreeKind};
use treecut_service::session::{LearnerConfig, Poll};
use treecut_service::Sessions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(64), |s| s.parse())?;
    let algorithm = args.next().unwrap_or_else(|| "nwdp".into());

    let tree = generate_tree(TreeKind::Random, n, 7)?;
    let truth = tree.cut_membership(&tree.cut_at_depth(3))?;
    let config = LearnerConfig::parse(&algorithm, None)?;
    let sessions = Sessions::new(None);
    let s = sessions.create(tree, config, 1, Some(500))?;

    loop {
        s.wait_settled(Duration::from_secs(5));
        match s.poll() {
            Poll::Ask(q) => {
                let similar = truth[q.a] == truth[q.b];
                println!("q{:<4} {:>4} ~ {:<4} -> {}", q.id, q.a, q.b, if similar { "similar" } else { "different" });
                s.submit(q.id, similar).expect("question is pending");
            }
            Poll::Working => continue,
            Poll::Done => break,
        }
    }
    let stats = s.stats();
    println!("\n{}", serde_json::to_string_pretty(&stats)?);
    let c = s.clustering()?;
    let mut sizes: Vec<usize> = c.clusters().iter().map(Vec::len).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    println!("cluster sizes: {sizes:?}");
    Ok(())
}
