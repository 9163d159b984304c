//! Full-information gradient steps on a path graph: regret and
//! disagreement over one stream.

use netreg::data::gen_oblivious;
use netreg::graph::{build_path, max_degree_weights};
use netreg::metrics::{cumulative_disagreement, max_final, offline_ls_unconstrained, regret_ls};
use netreg::protocol::{run, AlgoParams, RunOptions};

fn main() -> netreg::Result<()> {
    let (n, m, horizon) = (5, 3, 4096);
    let w = max_degree_weights(&build_path(n)?)?;
    let data = gen_oblivious(n, m, horizon, 1.0, 5.0, 0.1, 42)?;
    let params = AlgoParams::fif(n, m, horizon, 1.0, 0.75)?;
    let trace = run(&params, &w, &data, &RunOptions::default())?;

    let y = offline_ls_unconstrained(&data);
    let regret = regret_ls(&trace, &data, &y)?;
    let dis = cumulative_disagreement(&trace);
    println!("eta = {:.3e}, comparator = {y:.4?}", params.eta);
    for t in [63, 255, 1023, 4095] {
        let worst = regret.iter().map(|r| r[t]).fold(f64::NEG_INFINITY, f64::max);
        println!("T = {:>5}: max regret {worst:>10.3}, disagreement {:>8.3}", t + 1, dis[t]);
    }
    println!("final max regret {:.3}", max_final(&regret));
    Ok(())
}
