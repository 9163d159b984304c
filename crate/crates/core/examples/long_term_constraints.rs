//! Full-information and bandit steps with long-term polytope constraints:
//! regret against the best point of K ∩ B_R, and cumulative violation.

use netreg::data::gen_oblivious;
use netreg::graph::{build_path, max_degree_weights};
use netreg::metrics::{cumulative_violation, max_final, offline_ls_constrained, regret_ls};
use netreg::projection::{BoundedPolytope, Polytope};
use netreg::protocol::{run, AlgoParams, RunOptions};

fn main() -> netreg::Result<()> {
    let (n, m, horizon, radius) = (5, 3, 4096, 2.0);
    let w = max_degree_weights(&build_path(n)?)?;
    let data = gen_oblivious(n, m, horizon, 1.0, 5.0, 0.1, 17)?;
    let k = Polytope::random(3, m, 1.0, 3)?;
    let y = offline_ls_constrained(&data, &BoundedPolytope::new(k.clone(), radius)?, 1e-10)?;
    println!("comparator {y:.4?}, max violation {:.2e}", k.max_violation(&y));

    let variants = [
        AlgoParams::fifc(n, m, horizon, 1.0, k.clone(), radius, 0.5, 2.0)?,
        AlgoParams::bfc(n, m, horizon, 1.0, k.clone(), radius, 0.5, 0.5, 2.0)?,
    ];
    for params in &variants {
        let trace = run(params, &w, &data, &RunOptions::default())?;
        let cv = cumulative_violation(&trace);
        println!(
            "{:>5}: max regret {:>9.2}, cumulative violation {:>8.3}",
            params.variant,
            max_final(&regret_ls(&trace, &data, &y)?),
            cv.last().unwrap()
        );
    }
    Ok(())
}
