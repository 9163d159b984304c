//! Two-point bandit steps: trial-mean regret with its standard error.

use netreg::data::gen_oblivious;
use netreg::graph::{build_path, max_degree_weights};
use netreg::metrics::{expected_over_trials, offline_ls_unconstrained, regret_ls};
use netreg::protocol::{run, AlgoParams, RunOptions};

fn main() -> netreg::Result<()> {
    let (n, m, horizon) = (8, 3, 2048);
    let w = max_degree_weights(&build_path(n)?)?;
    let data = gen_oblivious(n, m, horizon, 1.0, 5.0, 0.1, 3)?;
    let y = offline_ls_unconstrained(&data);
    let params = AlgoParams::bf(n, m, horizon, 1.0, 1.1)?;
    println!("kappa = {:.2}, eps = {:.4}, eta = {:.3e}", params.kappa.unwrap(), params.eps.unwrap(), params.eta);

    let stats = expected_over_trials(20, 99, |seed, _| {
        let trace = run(&params, &w, &data, &RunOptions { seed, ..RunOptions::default() })?;
        Ok(regret_ls(&trace, &data, &y)?.iter().map(|r| *r.last().unwrap()).collect())
    })?;
    for (i, (mu, se)) in stats.mean.iter().zip(&stats.stderr).enumerate() {
        println!("node {i}: regret {mu:>10.2} +- {se:.2}");
    }
    Ok(())
}
