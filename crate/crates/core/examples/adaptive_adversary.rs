//! A tracking adversary reacts to each node's last prediction; the ball-
//! constrained bandit variant keeps every predictor inside (1 − ξ)B_R.

use netreg::data::tracking_adversaries;
use netreg::graph::{build_path, max_degree_weights};
use netreg::linalg::norm;
use netreg::metrics::{regret_series, QuadraticObjective};
use netreg::projection::Ball;
use netreg::protocol::{run_adaptive, AlgoParams, RunOptions};

fn main() -> netreg::Result<()> {
    let (n, m, horizon) = (5, 2, 4096);
    let w = max_degree_weights(&build_path(n)?)?;
    let params = AlgoParams::bf_aa(n, m, horizon, 1.0, 1.0)?;
    let mut adversaries = tracking_adversaries(n, m, 1.0, 5.0, 11)?;
    let (trace, data) = run_adaptive(&params, &w, &mut adversaries, &RunOptions { seed: 5, ..RunOptions::default() })?;

    let y = QuadraticObjective::from_data(&data).minimize_over(&Ball::new(1.0)?, 1e-10, 1_000_000)?;
    let comp: Vec<f64> = (0..horizon).map(|t| data.round_loss(t, &y)).collect();
    let regret = regret_series(&trace, &comp)?;
    let radius = trace.final_predictors.iter().map(|x| norm(x)).fold(0.0, f64::max);
    println!("comparator {y:.4?}, largest final predictor norm {radius:.4}");
    for (i, r) in regret.iter().enumerate() {
        println!("node {i}: final regret {:.2}", r.last().unwrap());
    }
    Ok(())
}
