//! Config-driven sweep: vary the graph size and fit the regret exponent
//! for each value.

use netreg::harness::{cmd_sweep, ExperimentConfig};
use serde_json::json;

fn main() -> netreg::Result<()> {
    let cfg: ExperimentConfig = serde_json::from_value(json!({
        "name": "path_sizes",
        "graph": {"family": "path", "n": 4},
        "data": {"mode": "oblivious", "m": 3, "alpha_h": 1.0, "alpha_z": 5.0, "sigma_noise": 0.1},
        "algo": {"variant": "fif", "beta": 0.75},
        "horizons": [256, 512, 1024, 2048, 4096],
        "master_seed": 1
    }))?;
    let table = cmd_sweep(&cfg, "graph.n", &[json!(4), json!(8), json!(16)], None)?;
    for row in &table.rows {
        let fit = &row.fits["regret"];
        println!(
            "n = {:>2}: final regret {:>9.2}, slope {:.3} (r2 {:.3})",
            row.value,
            row.regret.last().unwrap().1,
            fit.slope,
            fit.r_squared
        );
    }
    Ok(())
}
