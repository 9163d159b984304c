//! Exact data: gradient steps versus Kaczmarz projections, with distance
//! to the solution set of all equations seen.

use netreg::data::gen_exact;
use netreg::graph::{build_cycle, max_degree_weights};
use netreg::metrics::{max_final, regret_l1};
use netreg::projection::affine_solution_set_distance;
use netreg::protocol::{run, AlgoParams, RunOptions};

fn main() -> netreg::Result<()> {
    let (n, m, horizon) = (6, 3, 2048);
    let w = max_degree_weights(&build_cycle(n)?)?;
    let y_star = [0.8, -1.5, 0.3];
    let data = gen_exact(n, m, horizon, 1.0, &y_star, 8)?;
    for params in [AlgoParams::fif(n, m, horizon, 1.0, 0.5)?, AlgoParams::elr(n, m, horizon)?] {
        let trace = run(&params, &w, &data, &RunOptions::default())?;
        let gap = trace
            .final_predictors
            .iter()
            .map(|x| affine_solution_set_distance(&data, x))
            .collect::<netreg::Result<Vec<_>>>()?;
        println!(
            "{:>4}: l1 regret {:>9.3}, final distance to solution set {:.3e}",
            params.variant,
            max_final(&regret_l1(&trace, &data)?),
            gap.iter().cloned().fold(0.0, f64::max)
        );
    }
    Ok(())
}
