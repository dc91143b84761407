//! Counts the cuts of full, line and random trees exactly.
//!
//! `cargo run --example cut_counting -- [n]`

use treecut::harness::{generate_tree, TreeKind};

fn main() -> treecut::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(1024, |s| s.parse().expect("n"));
    for kind in [TreeKind::Full, TreeKind::Line, TreeKind::Random] {
        let n = if kind == TreeKind::Full { n.next_power_of_two() } else { n };
        let h = generate_tree(kind, n, 1)?;
        let counts = h.count_cuts();
        let total = counts.total().to_string();
        let shown = if total.len() > 40 { format!("{}...({} digits)", &total[..20], total.len()) } else { total };
        println!("{kind:?}\tn={n}\theight={}\tlog2 N={:.2}\tN={shown}", h.height(), counts.log2_total());
    }
    // every cut either keeps a node whole or cuts both children: N = 1 + N(l) N(r)
    let h = generate_tree(TreeKind::Full, 8, 0)?;
    let c = h.count_cuts();
    for v in h.internal_nodes() {
        let [l, r] = h.children(v).unwrap();
        assert_eq!(*c.get(v), c.get(l) * c.get(r) + 1u32);
    }
    println!("eight-leaf full tree: {} cuts", c.total());
    Ok(())
}
