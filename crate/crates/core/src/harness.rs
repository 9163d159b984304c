//! Config-driven experiments: build the graph, generate or adapt the data,
//! run a variant over every `(horizon, trial)` cell, and reduce the traces
//! to regret, violation, and disagreement figures with exponent fits.
//!
//! A config is one JSON document:
//!
//! ```json
//! {
//!   "name": "fif_path",
//!   "graph": {"family": "path", "n": 5},
//!   "data": {"mode": "oblivious", "m": 3, "alpha_h": 1.0, "alpha_z": 5.0, "sigma_noise": 0.1},
//!   "algo": {"variant": "fif", "beta": 0.75},
//!   "horizons": [256, 512, 1024, 2048],
//!   "trials": 1,
//!   "master_seed": 7
//! }
//! ```
//!
//! Any field can be overridden by a dotted path, e.g. `algo.beta=0.5`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{gen_exact, gen_oblivious, tracking_adversaries, DataMode, DataTensor};
use crate::error::{Error, Result};
use crate::graph::{
    build_complete, build_cycle, build_path, build_random_geometric, build_random_regular, max_degree_weights, Graph,
    GraphFamily, MixingMatrix,
};
use crate::metrics::{
    cumulative_disagreement, cumulative_violation, fit_exponent, max_final, read_series_csv, regret_l1, regret_series,
    summarize, trial_seed, write_series_csv, ExponentFit, QuadraticObjective, PGD_MAX_ITER, PGD_TOL,
};
use crate::projection::{Ball, BoundedPolytope, DecisionSet, Polytope};
use crate::protocol::{run, run_adaptive, AlgoParams, RunOptions, RunTrace, Tuning, Validation, Variant};
use crate::seed;

const DATA_STREAM: u64 = 0xDA7A;
const GRAPH_STREAM: u64 = 0x6AF;
const POLY_STREAM: u64 = 0x9017;
const ALGO_STREAM: u64 = 0xA160;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub family: GraphFamily,
    pub n: usize,
    /// Random geometric link radius.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Random regular degree.
    #[serde(default)]
    pub degree: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Ordered `[j, i]` pairs for the custom family.
    #[serde(default)]
    pub edges: Option<Vec<[usize; 2]>>,
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub mode: DataMode,
    pub m: usize,
    #[serde(default = "default_alpha")]
    pub alpha_h: f64,
    #[serde(default = "default_alpha")]
    pub alpha_z: f64,
    #[serde(default)]
    pub sigma_noise: f64,
    /// Planted solution for exact mode; drawn from `N(0, I)` if absent.
    #[serde(default)]
    pub y_star: Option<Vec<f64>>,
    /// Fresh data per trial instead of one stream shared by all trials.
    #[serde(default)]
    pub per_trial: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Either explicit constraint vectors or a random draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintSpec {
    Explicit(Polytope),
    Random { s: usize, k_bound: f64, seed: Option<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoSpec {
    pub variant: Variant,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub kappa_factor: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub inner_radius: Option<f64>,
    #[serde(default)]
    pub constraints: Option<ConstraintSpec>,
    /// Common start vector; zero if absent.
    #[serde(default)]
    pub x_init: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub graph: GraphSpec,
    pub data: DataSpec,
    pub algo: AlgoSpec,
    pub horizons: Vec<usize>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Output directory used by `run` when none is given on the command line.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub record_predictors: bool,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    /// Read `path` and apply `key=value` overrides before parsing.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut doc: Value = serde_json::from_str(&text)?;
        for o in overrides {
            apply_override_str(&mut doc, o)?;
        }
        Ok(serde_json::from_value(doc)?)
    }

    /// A copy with `path = value` applied.
    pub fn with_override(&self, path: &str, value: Value) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        apply_override(&mut doc, path, value)?;
        Ok(serde_json::from_value(doc)?)
    }

    pub fn n(&self) -> usize {
        self.graph.n
    }

    pub fn m(&self) -> usize {
        self.data.m
    }

    fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or_else(|| seed::derive(self.master_seed, &[DATA_STREAM]))
    }

    pub fn build_graph(&self) -> Result<Graph> {
        let g = &self.graph;
        let gseed = g.seed.unwrap_or_else(|| seed::derive(self.master_seed, &[GRAPH_STREAM]));
        match g.family {
            GraphFamily::Complete => build_complete(g.n),
            GraphFamily::Path => build_path(g.n),
            GraphFamily::Cycle => build_cycle(g.n),
            GraphFamily::RandomGeometric => {
                let r = g.radius.ok_or_else(|| Error::Config("random_geometric needs graph.radius".into()))?;
                build_random_geometric(g.n, r, gseed)
            }
            GraphFamily::RandomRegular => {
                let k = g.degree.ok_or_else(|| Error::Config("random_regular needs graph.degree".into()))?;
                build_random_regular(g.n, k, gseed)
            }
            GraphFamily::Custom => {
                let edges = g.edges.as_ref().ok_or_else(|| Error::Config("custom graph needs graph.edges".into()))?;
                Graph::custom(g.n, &edges.iter().map(|e| (e[0], e[1])).collect::<Vec<_>>())
            }
        }
    }

    pub fn build_constraints(&self) -> Result<Option<Polytope>> {
        match &self.algo.constraints {
            None => Ok(None),
            Some(ConstraintSpec::Explicit(p)) => Ok(Some(p.clone())),
            Some(ConstraintSpec::Random { s, k_bound, seed: sd }) => {
                let sd = sd.unwrap_or_else(|| seed::derive(self.master_seed, &[POLY_STREAM]));
                Polytope::random(*s, self.m(), *k_bound, sd).map(Some)
            }
        }
    }

    fn tuning(&self, constraints: Option<Polytope>) -> Tuning {
        let a = &self.algo;
        Tuning {
            beta: a.beta,
            gamma: a.gamma,
            kappa: a.kappa,
            kappa_factor: a.kappa_factor,
            c: a.c,
            radius: a.radius,
            inner_radius: a.inner_radius,
            constraints,
        }
    }

    pub fn params_for(&self, horizon: usize) -> Result<AlgoParams> {
        let tuning = self.tuning(self.build_constraints()?);
        AlgoParams::derive(self.algo.variant, self.n(), self.m(), horizon, self.data.alpha_h, &tuning)
    }

    fn planted(&self) -> Vec<f64> {
        self.data.y_star.clone().unwrap_or_else(|| {
            let mut rng = seed::stream(self.data_seed(), &[0x9A]);
            (0..self.m()).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
        })
    }

    /// Oblivious or exact stream of length `horizon`. Streams sharing a
    /// seed are prefixes of one another.
    pub fn generate_data(&self, horizon: usize, data_seed: u64) -> Result<DataTensor> {
        let d = &self.data;
        match d.mode {
            DataMode::Oblivious => gen_oblivious(self.n(), d.m, horizon, d.alpha_h, d.alpha_z, d.sigma_noise, data_seed),
            DataMode::Exact => gen_exact(self.n(), d.m, horizon, d.alpha_h, &self.planted(), data_seed),
            DataMode::Adaptive => Err(Error::Config("adaptive data is produced during the run".into())),
        }
    }

    /// Comparator set for the regret of this variant, if constrained.
    pub fn comparator_set(&self, params: &AlgoParams) -> Result<Option<Box<dyn DecisionSet>>> {
        let radius = || params.radius.ok_or_else(|| Error::Config("variant needs a radius".into()));
        Ok(match params.variant {
            Variant::Fif | Variant::Bf | Variant::Elr => None,
            Variant::BfAa => Some(Box::new(Ball::new(radius()?)?)),
            Variant::Fifc | Variant::Bfc => {
                let k = params.constraints.clone().ok_or_else(|| Error::Config("variant needs constraints".into()))?;
                Some(Box::new(BoundedPolytope::new(k, radius()?)?))
            }
        })
    }
}

/// Set `path` (dot separated; numeric segments index arrays) to `value`,
/// creating intermediate objects as needed.
pub fn apply_override(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override path '{path}'")));
    }
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| Error::Config(format!("'{part}' is not an array index in '{path}'")))?;
                items.get_mut(idx).ok_or_else(|| Error::Config(format!("index {idx} out of range in '{path}'")))?
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert(if last { Value::Null } else { Value::Object(Default::default()) }),
            Value::Null if !last => {
                *cur = Value::Object(Default::default());
                match cur {
                    Value::Object(map) => map.entry(part.to_string()).or_insert(Value::Object(Default::default())),
                    _ => unreachable!(),
                }
            }
            _ => return Err(Error::Config(format!("'{part}' in '{path}' does not name a field"))),
        };
    }
    *cur = value;
    Ok(())
}

/// Apply `key=value`; the value is parsed as JSON, falling back to a string.
pub fn apply_override_str(doc: &mut Value, assignment: &str) -> Result<()> {
    let (k, v) = assignment.split_once('=').ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    apply_override(doc, k.trim(), value)
}

/// Everything `validate` found, without running anything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    /// `σ₂` of the mixing matrix, when the graph could be built.
    pub sigma2: Option<f64>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the config's structure, the graph, dimensions, and every
/// parameter hypothesis of the variant at every horizon.
pub fn cmd_validate(cfg: &ExperimentConfig) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let mut v = Validation::default();
    if cfg.horizons.is_empty() {
        v.violations.push("horizons must not be empty".into());
    }
    if cfg.horizons.windows(2).any(|w| w[1] <= w[0]) {
        v.violations.push("horizons must be strictly increasing".into());
    }
    if cfg.trials == 0 {
        v.violations.push("trials must be at least 1".into());
    }
    if cfg.m() == 0 {
        v.violations.push("data.m must be at least 1".into());
    }
    if cfg.n() < cfg.m() {
        v.violations.push(format!("n = {} < m = {}: no round can have full column rank", cfg.n(), cfg.m()));
    }
    if cfg.data.mode == DataMode::Adaptive && !cfg.data.per_trial {
        v.warnings.push("adaptive data is always drawn per trial".into());
    }
    if let Some(y) = &cfg.data.y_star {
        if y.len() != cfg.m() {
            v.violations.push(format!("data.y_star has dimension {}, expected {}", y.len(), cfg.m()));
        }
    }
    if let Some(x) = &cfg.algo.x_init {
        if x.len() != cfg.m() {
            v.violations.push(format!("algo.x_init has dimension {}, expected {}", x.len(), cfg.m()));
        }
    }
    match cfg.build_graph().and_then(|g| max_degree_weights(&g)) {
        Ok(w) => rep.sigma2 = Some(w.sigma2()),
        Err(e) => v.violations.push(format!("graph: {e}")),
    }
    for &t in &cfg.horizons {
        match cfg.params_for(t) {
            Ok(p) => {
                let pv = p.validate();
                v.violations.extend(pv.violations.into_iter().map(|s| format!("T = {t}: {s}")));
                v.warnings.extend(pv.warnings.into_iter().map(|s| format!("T = {t}: {s}")));
                if let (Some(x0), Ok(Some(set))) = (&cfg.algo.x_init, cfg.comparator_set(&p)) {
                    if x0.len() == cfg.m() && !set.contains(x0, 1e-12) {
                        v.warnings.push(format!("T = {t}: x_init lies outside the decision set"));
                    }
                }
            }
            Err(e) => v.violations.push(format!("T = {t}: {e}")),
        }
    }
    v.warnings.dedup();
    rep.violations = v.violations;
    rep.warnings = v.warnings;
    rep
}

/// Mean figures for one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub horizon: usize,
    /// Max over nodes of the trial-mean final regret.
    pub regret: f64,
    /// Standard error of that node's final regret across trials.
    pub regret_stderr: f64,
    /// Trial-mean final regret per node.
    pub regret_per_node: Vec<f64>,
    /// Max over nodes of the trial-mean final `ℓ1` regret (exact data only).
    pub regret_l1: Option<f64>,
    /// Trial-mean cumulative violation (constrained variants only).
    pub cv: Option<f64>,
    /// Trial-mean cumulative disagreement `Σ_t Σ_i ‖x_i(t) − x_avg(t)‖`.
    pub disagreement: f64,
    /// Offline comparator the regret is measured against.
    pub comparator: Vec<f64>,
    /// Trial-mean cumulative regret per node and round, kept if requested.
    #[serde(skip)]
    pub regret_series: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: Option<String>,
    pub variant: Variant,
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub sigma2: f64,
    pub horizons: Vec<HorizonResult>,
    /// Exponent fits keyed by metric (`regret`, `regret_l1`, `cv`,
    /// `disagreement`), present when at least four horizons are `≥ 64`.
    pub fits: BTreeMap<String, ExponentFit>,
}

impl ExperimentResult {
    pub fn fit(&self, metric: &str) -> Option<&ExponentFit> {
        self.fits.get(metric)
    }

    pub fn finals(&self, metric: &str) -> Vec<f64> {
        self.horizons
            .iter()
            .map(|h| match metric {
                "regret" => h.regret,
                "regret_l1" => h.regret_l1.unwrap_or(f64::NAN),
                "cv" => h.cv.unwrap_or(f64::NAN),
                "disagreement" => h.disagreement,
                _ => f64::NAN,
            })
            .collect()
    }
}

struct Cell {
    trace: RunTrace,
    data: Arc<DataTensor>,
    objective: QuadraticObjective,
}

/// Stem shared by every file of one cell.
pub fn cell_stem(variant: Variant, n: usize, horizon: usize, trial: usize, seed: u64) -> String {
    format!("{variant}_n{n}_T{horizon}_trial{trial}_seed{seed}")
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    w: &'a MixingMatrix,
    out: Option<&'a Path>,
    keep_series: bool,
}

fn run_cell(ctx: &Ctx<'_>, params: &AlgoParams, shared: Option<&Arc<DataTensor>>, horizon: usize, trial: usize, cell_seed: u64) -> Result<Cell> {
    let cfg = ctx.cfg;
    let x0 = cfg.algo.x_init.clone().unwrap_or_else(|| vec![0.0; cfg.m()]);
    let opts = RunOptions {
        x_init: Some(vec![x0; cfg.n()]),
        seed: seed::derive(cell_seed, &[ALGO_STREAM]),
        record_predictors: cfg.record_predictors,
    };
    let (trace, data) = match (cfg.data.mode, shared) {
        (DataMode::Adaptive, _) => {
            let mut adv = tracking_adversaries(cfg.n(), cfg.m(), cfg.data.alpha_h, cfg.data.alpha_z, seed::derive(cell_seed, &[DATA_STREAM]))?;
            let (tr, d) = run_adaptive(params, ctx.w, &mut adv, &opts)?;
            (tr, Arc::new(d))
        }
        (_, Some(d)) => (run(params, ctx.w, d, &opts)?, Arc::clone(d)),
        (_, None) => {
            let d = Arc::new(cfg.generate_data(horizon, seed::derive(cell_seed, &[DATA_STREAM]))?);
            (run(params, ctx.w, &d, &opts)?, d)
        }
    };
    if let Some(dir) = ctx.out {
        let stem = cell_stem(params.variant, cfg.n(), horizon, trial, cell_seed);
        trace.write_csv(BufWriter::new(File::create(dir.join(format!("{stem}_trace.csv")))?))?;
        trace.write_params_json(BufWriter::new(File::create(dir.join(format!("{stem}_params.json")))?))?;
    }
    let objective = QuadraticObjective::from_data(&data);
    Ok(Cell { trace, data, objective })
}

fn run_horizon(ctx: &Ctx<'_>, horizon: usize) -> Result<HorizonResult> {
    let cfg = ctx.cfg;
    let params = cfg.params_for(horizon)?;
    let horizon_seed = seed::derive(cfg.master_seed, &[horizon as u64]);
    let shared = match (cfg.data.mode, cfg.data.per_trial) {
        (DataMode::Adaptive, _) | (_, true) => None,
        _ => Some(Arc::new(cfg.generate_data(horizon, cfg.data_seed())?)),
    };
    let cells = (0..cfg.trials)
        .into_par_iter()
        .map(|k| {
            let cs = trial_seed(horizon_seed, k);
            run_cell(ctx, &params, shared.as_ref(), horizon, k, cs)
                .map_err(|e| Error::Cell { horizon, trial: k, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;

    // one comparator for all trials: the minimizer of the trial-averaged loss
    let objective = QuadraticObjective::average(&cells.iter().map(|c| c.objective.clone()).collect::<Vec<_>>())?;
    let comparator = match cfg.comparator_set(&params)? {
        None => objective.minimize(),
        Some(set) => objective.minimize_over(set.as_ref(), PGD_TOL, PGD_MAX_ITER)?,
    };

    let n = cfg.n();
    let per_trial: Vec<Vec<Vec<f64>>> = cells
        .par_iter()
        .map(|c| {
            let comp: Vec<f64> = (0..horizon).map(|t| c.data.round_loss(t, &comparator)).collect();
            regret_series(&c.trace, &comp)
        })
        .collect::<Result<_>>()?;
    if let Some(dir) = ctx.out {
        for (k, series) in per_trial.iter().enumerate() {
            let stem = cell_stem(params.variant, n, horizon, k, trial_seed(horizon_seed, k));
            write_series_csv(BufWriter::new(File::create(dir.join(format!("{stem}_regret.csv")))?), series)?;
        }
    }
    let finals: Vec<Vec<f64>> = per_trial.iter().map(|s| s.iter().map(|v| *v.last().unwrap_or(&0.0)).collect()).collect();
    let node_stats = summarize(&finals)?;
    let (best_node, regret) = node_stats
        .mean
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });

    let regret_l1 = if cfg.data.mode == DataMode::Exact {
        let finals = cells
            .iter()
            .map(|c| regret_l1(&c.trace, &c.data).map(|s| s.iter().map(|v| *v.last().unwrap_or(&0.0)).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let stats = summarize(&finals)?;
        Some(stats.mean.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    } else {
        None
    };
    let cv = params.variant.is_constrained().then(|| {
        cells.iter().map(|c| *cumulative_violation(&c.trace).last().unwrap_or(&0.0)).sum::<f64>() / cells.len() as f64
    });
    let disagreement =
        cells.iter().map(|c| *cumulative_disagreement(&c.trace).last().unwrap_or(&0.0)).sum::<f64>() / cells.len() as f64;
    let regret_series = if ctx.keep_series {
        (0..n)
            .map(|i| (0..horizon).map(|t| per_trial.iter().map(|s| s[i][t]).sum::<f64>() / per_trial.len() as f64).collect())
            .collect()
    } else {
        Vec::new()
    };
    Ok(HorizonResult {
        horizon,
        regret,
        regret_stderr: node_stats.stderr[best_node],
        regret_per_node: node_stats.mean,
        regret_l1,
        cv,
        disagreement,
        comparator,
        regret_series,
    })
}

/// Knobs for [`run_experiment_with`].
#[derive(Debug, Clone, Default)]
pub struct ExperimentOptions {
    /// Write per-cell CSVs and `summary.json` here.
    pub out: Option<PathBuf>,
    /// Keep the trial-mean regret series of every horizon in memory.
    pub keep_series: bool,
}

/// Run every `(horizon, trial)` cell in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(cfg, &ExperimentOptions::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, opts: &ExperimentOptions) -> Result<ExperimentResult> {
    let report = cmd_validate(cfg);
    if !report.is_ok() {
        return Err(Error::Config(format!("invalid config: {}", report.violations.join("; "))));
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let graph = cfg.build_graph()?;
    let w = max_degree_weights(&graph)?;
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir)?;
    }
    let ctx = Ctx { cfg, w: &w, out: opts.out.as_deref(), keep_series: opts.keep_series };
    let horizons = cfg.horizons.par_iter().map(|&t| run_horizon(&ctx, t)).collect::<Result<Vec<_>>>()?;
    let mut result = ExperimentResult {
        name: cfg.name.clone(),
        variant: cfg.algo.variant,
        n: cfg.n(),
        m: cfg.m(),
        trials: cfg.trials,
        master_seed: cfg.master_seed,
        sigma2: w.sigma2(),
        horizons,
        fits: BTreeMap::new(),
    };
    let ts = cfg.horizons.clone();
    for metric in ["regret", "regret_l1", "cv", "disagreement"] {
        let finals = result.finals(metric);
        if finals.iter().all(|v| v.is_finite()) {
            if let Ok(fit) = fit_exponent(&ts, &finals) {
                result.fits.insert(metric.to_string(), fit);
            }
        }
    }
    if let Some(dir) = &opts.out {
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("summary.json"))?), &result)?;
    }
    Ok(result)
}

/// Run and write per-cell CSVs plus `summary.json` into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentResult> {
    run_experiment_with(cfg, &ExperimentOptions { out: Some(out.to_path_buf()), keep_series: false })
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: Value,
    /// `(T, regret)` per horizon.
    pub regret: Vec<(usize, f64)>,
    pub cv: Vec<(usize, f64)>,
    pub fits: BTreeMap<String, ExponentFit>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

/// Run the config once per value of `path`, sharing seeds across values.
/// With `out`, each run writes into `out/<path>=<value>/` and the table
/// goes to `out/sweep.json`.
pub fn cmd_sweep(cfg: &ExperimentConfig, path: &str, values: &[Value], out: Option<&Path>) -> Result<SweepTable> {
    // reject a bad path even when there is nothing to run
    let mut doc = serde_json::to_value(cfg)?;
    let pointer = format!("/{}", path.replace('.', "/"));
    if doc.pointer(&pointer).is_none() {
        apply_override(&mut doc, path, Value::Null)?;
        serde_json::from_value::<ExperimentConfig>(doc)
            .map_err(|e| Error::Config(format!("'{path}' does not name a config field: {e}")))?;
    }
    let mut table = SweepTable { parameter: path.to_string(), rows: Vec::new() };
    for v in values {
        let c = cfg.with_override(path, v.clone())?;
        let label = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let opts = ExperimentOptions { out: out.map(|d| d.join(format!("{path}={label}"))), keep_series: false };
        let r = run_experiment_with(&c, &opts)?;
        table.rows.push(SweepRow {
            value: v.clone(),
            regret: r.horizons.iter().map(|h| (h.horizon, h.regret)).collect(),
            cv: r.horizons.iter().filter_map(|h| h.cv.map(|c| (h.horizon, c))).collect(),
            fits: r.fits.clone(),
        });
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("sweep.json"))?), &table)?;
    }
    Ok(table)
}

/// Parsed cell stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellKey {
    pub variant: String,
    pub n: usize,
    pub horizon: usize,
    pub trial: usize,
    pub seed: u64,
}

/// Parse `{variant}_n{n}_T{T}_trial{k}_seed{s}_{suffix}`.
pub fn parse_cell_stem(name: &str) -> Option<(CellKey, String)> {
    let n_at = name.find("_n")?;
    let variant = &name[..n_at];
    let mut rest = name[n_at + 1..].split('_');
    let n = rest.next()?.strip_prefix('n')?.parse().ok()?;
    let horizon = rest.next()?.strip_prefix('T')?.parse().ok()?;
    let trial = rest.next()?.strip_prefix("trial")?.parse().ok()?;
    let seed = rest.next()?.strip_prefix("seed")?.parse().ok()?;
    let suffix = rest.collect::<Vec<_>>().join("_");
    Some((CellKey { variant: variant.to_string(), n, horizon, trial, seed }, suffix))
}

/// Re-fit the regret exponent from the `*_regret.csv` files in `dir`:
/// per horizon, the max over nodes of the trial-mean final regret.
/// `metric` is `regret`, `cv`, or `disagreement`; the latter two are read
/// from the trace files.
pub fn cmd_fit(dir: &Path, metric: &str) -> Result<(Vec<(usize, f64)>, ExponentFit)> {
    let suffix = match metric {
        "regret" => "regret.csv",
        "cv" | "disagreement" => "trace.csv",
        other => return Err(Error::Config(format!("unknown metric '{other}'"))),
    };
    let mut per_t: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for path in entries {
        let Some(name) = path.file_name().and_then(|s| s.to_str()) else { continue };
        let Some((key, sfx)) = parse_cell_stem(name) else { continue };
        if sfx != suffix {
            continue;
        }
        let finals = if metric == "regret" {
            read_series_csv(File::open(&path)?)?.iter().map(|s| *s.last().unwrap_or(&0.0)).collect()
        } else {
            vec![sum_trace_column(&path, metric)?]
        };
        per_t.entry(key.horizon).or_default().push(finals);
    }
    if per_t.is_empty() {
        return Err(Error::Config(format!("no *_{suffix} files in {}", dir.display())));
    }
    let mut points = Vec::new();
    for (t, finals) in per_t {
        let stats = summarize(&finals)?;
        points.push((t, max_final(&stats.mean.iter().map(|v| vec![*v]).collect::<Vec<_>>())));
    }
    let (ts, vs): (Vec<usize>, Vec<f64>) = points.iter().copied().unzip();
    let fit = fit_exponent(&ts, &vs)?;
    Ok((points, fit))
}

/// `Σ_t` of a per-round trace column, read from the node-1 rows.
fn sum_trace_column(path: &Path, column: &str) -> Result<f64> {
    let col = if column == "cv" { "cv_increment" } else { column };
    let mut rd = csv::Reader::from_reader(File::open(path)?);
    let headers = rd.headers()?.clone();
    let ci = headers.iter().position(|h| h == col).ok_or_else(|| Error::Format(format!("no column {col}")))?;
    let mut sum = 0.0;
    for rec in rd.records() {
        let rec = rec?;
        if &rec[1] == "1" {
            sum += rec[ci].parse::<f64>().map_err(|e| Error::Format(e.to_string()))?;
        }
    }
    Ok(sum)
}
