//! Build each graph family, form max-degree weights, and report σ₂.

use netreg::graph::{build_complete, build_cycle, build_path, build_random_geometric, build_random_regular, max_degree_weights};

fn main() -> netreg::Result<()> {
    let graphs = [
        ("complete(8)", build_complete(8)?),
        ("path(8)", build_path(8)?),
        ("cycle(8)", build_cycle(8)?),
        ("random_geometric(20, 0.6)", build_random_geometric(20, 0.6, 7)?),
        ("random_regular(12, 3)", build_random_regular(12, 3, 1)?),
    ];
    println!("{:<28} {:>6} {:>10}", "graph", "edges", "sigma2");
    for (name, g) in &graphs {
        let w = max_degree_weights(g)?;
        println!("{name:<28} {:>6} {:>10.6}", g.edge_count(), w.sigma2());
    }
    Ok(())
}
