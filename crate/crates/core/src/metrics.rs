//! Offline comparators, regret and violation series, trial averaging, and
//! log-log exponent fits.
//!
//! The metric side has global knowledge: a node's loss in round `t` is
//! evaluated against all `n` samples of that round, although the node
//! itself only ever saw its own.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataTensor;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist, lambda_max_sym, pinv};
use crate::projection::DecisionSet;
use crate::protocol::RunTrace;
use crate::seed;

/// Iteration cap of [`offline_ls_constrained`].
pub const PGD_MAX_ITER: usize = 1_000_000;
/// Default stopping tolerance of [`offline_ls_constrained`].
pub const PGD_TOL: f64 = 1e-10;
/// Horizons below this are left out of exponent fits.
pub const FIT_MIN_HORIZON: usize = 64;
/// Regret values are clamped to this before taking logs.
pub const FIT_FLOOR: f64 = 1e-12;

/// `f(y) = ½ yᵀGy − bᵀy + c`, the total square loss of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub gram: DMatrix<f64>,
    pub moment: DVector<f64>,
    pub constant: f64,
}

impl QuadraticObjective {
    pub fn zeros(m: usize) -> Self {
        QuadraticObjective { gram: DMatrix::zeros(m, m), moment: DVector::zeros(m), constant: 0.0 }
    }

    /// `G = Σ hhᵀ`, `b = Σ hz`, `c = ½ Σ z²` over every sample.
    pub fn from_data(data: &DataTensor) -> Self {
        let m = data.m();
        let mut q = Self::zeros(m);
        for p in data.points() {
            for a in 0..m {
                q.moment[a] += p.h[a] * p.z;
                for c in 0..m {
                    q.gram[(a, c)] += p.h[a] * p.h[c];
                }
            }
            q.constant += 0.5 * p.z * p.z;
        }
        q
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let y = DVector::from_column_slice(y);
        0.5 * y.dot(&(&self.gram * &y)) - self.moment.dot(&y) + self.constant
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let y = DVector::from_column_slice(y);
        (&self.gram * y - &self.moment).as_slice().to_vec()
    }

    /// `self + w · other`
    pub fn add_scaled(&mut self, other: &QuadraticObjective, w: f64) {
        self.gram += &other.gram * w;
        self.moment += &other.moment * w;
        self.constant += other.constant * w;
    }

    /// Mean of several objectives: the plug-in estimate of an expected loss.
    pub fn average(parts: &[QuadraticObjective]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidParameter("nothing to average".into()))?;
        let mut acc = Self::zeros(first.dim());
        for p in parts {
            check_dim(acc.dim(), p.dim())?;
            acc.add_scaled(p, 1.0 / parts.len() as f64);
        }
        Ok(acc)
    }

    /// Minimum-norm minimizer `G⁺b`.
    pub fn minimize(&self) -> Vec<f64> {
        (pinv(&self.gram) * &self.moment).as_slice().to_vec()
    }

    /// Projected gradient descent with step `1/λ_max(G)`, stopped when
    /// successive iterates differ by less than `tol`.
    pub fn minimize_over(&self, set: &dyn DecisionSet, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let lmax = lambda_max_sym(&self.gram);
        let mut y = set.project(&vec![0.0; self.dim()])?;
        if !(lmax > 0.0) {
            return Ok(y);
        }
        let step = 1.0 / lmax;
        for _ in 0..max_iter {
            let g = self.gradient(&y);
            let cand: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let next = set.project(&cand)?;
            let moved = dist(&next, &y);
            y = next;
            if moved < tol {
                return Ok(y);
            }
        }
        Err(Error::NoConvergence { what: "projected gradient descent", iterations: max_iter })
    }
}

/// Minimizer of the total square loss; the minimum-norm one if several.
pub fn offline_ls_unconstrained(data: &DataTensor) -> Vec<f64> {
    QuadraticObjective::from_data(data).minimize()
}

/// Minimizer of the total square loss over `set`.
pub fn offline_ls_constrained(data: &DataTensor, set: &dyn DecisionSet, tol: f64) -> Result<Vec<f64>> {
    QuadraticObjective::from_data(data).minimize_over(set, tol, PGD_MAX_ITER)
}

/// Cumulative `Σ_s (loss_i(s) − comparator[s])` per node: `out[i][t]`
/// covers rounds `0..=t`.
pub fn regret_series(trace: &RunTrace, comparator: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_dim(trace.rounds(), comparator.len())?;
    Ok((0..trace.n())
        .map(|i| {
            let mut acc = 0.0;
            (0..trace.rounds())
                .map(|t| {
                    acc += trace.network_loss(t, i) - comparator[t];
                    acc
                })
                .collect()
        })
        .collect())
}

/// Per-node cumulative square-loss regret against the fixed predictor
/// `y_star`.
pub fn regret_ls(trace: &RunTrace, data: &DataTensor, y_star: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_dim(data.m(), y_star.len())?;
    check_dim(trace.n(), data.n())?;
    if data.rounds() < trace.rounds() {
        return Err(Error::DimensionMismatch { expected: trace.rounds(), actual: data.rounds() });
    }
    let comparator: Vec<f64> = (0..trace.rounds()).map(|t| data.round_loss(t, y_star)).collect();
    regret_series(trace, &comparator)
}

/// Per-node cumulative `Σ_j |h_jᵀx_i(t) − z_j| / ‖h_j‖`. The comparator
/// term is zero on exactly realizable data.
pub fn regret_l1(trace: &RunTrace, data: &DataTensor) -> Result<Vec<Vec<f64>>> {
    check_dim(trace.n(), data.n())?;
    for t in 0..trace.rounds() {
        for j in 0..data.n() {
            if data.h(t, j).iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroNormCovariate { round: t, node: j });
            }
        }
    }
    Ok((0..trace.n())
        .map(|i| {
            let mut acc = 0.0;
            (0..trace.rounds())
                .map(|t| {
                    acc += trace.network_l1(t, i);
                    acc
                })
                .collect()
        })
        .collect())
}

/// Running sum of the per-round violation increments.
pub fn cumulative_violation(trace: &RunTrace) -> Vec<f64> {
    cumulative(&trace.cv_increment)
}

/// Running sum of per-round disagreement.
pub fn cumulative_disagreement(trace: &RunTrace) -> Vec<f64> {
    cumulative(&trace.disagreement)
}

fn cumulative(xs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    xs.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// `max_i series[i][last]`
pub fn max_final(series: &[Vec<f64>]) -> f64 {
    series.iter().filter_map(|s| s.last().copied()).fold(f64::NEG_INFINITY, f64::max)
}

/// Pointwise mean and standard error over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
}

/// Seed of trial `k` under `master_seed`.
pub fn trial_seed(master_seed: u64, k: usize) -> u64 {
    seed::derive(master_seed, &[k as u64])
}

/// Run `experiment(trial_seed, k)` for `k = 0..num_trials` in parallel and
/// reduce the returned series in trial order. With one trial the standard
/// error is zero.
pub fn expected_over_trials<F>(num_trials: usize, master_seed: u64, experiment: F) -> Result<TrialStats>
where
    F: Fn(u64, usize) -> Result<Vec<f64>> + Sync,
{
    if num_trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let runs = (0..num_trials)
        .into_par_iter()
        .map(|k| experiment(trial_seed(master_seed, k), k))
        .collect::<Result<Vec<_>>>()?;
    summarize(&runs)
}

/// Mean and standard error of equally long series.
pub fn summarize(runs: &[Vec<f64>]) -> Result<TrialStats> {
    let len = runs.first().map_or(0, Vec::len);
    for r in runs {
        check_dim(len, r.len())?;
    }
    let k = runs.len() as f64;
    let mean: Vec<f64> = (0..len).map(|t| runs.iter().map(|r| r[t]).sum::<f64>() / k).collect();
    let stderr = (0..len)
        .map(|t| {
            if runs.len() < 2 {
                return 0.0;
            }
            let var = runs.iter().map(|r| (r[t] - mean[t]).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        })
        .collect();
    Ok(TrialStats { mean, stderr, trials: runs.len() })
}

/// Least-squares line through `(log T, log value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Horizons that entered the fit.
    pub horizons: Vec<usize>,
}

/// Fit `value ≈ e^intercept · T^slope`, leaving out `T < 64` and clamping
/// values below at `1e-12`. Needs at least four remaining points.
pub fn fit_exponent(horizons: &[usize], finals: &[f64]) -> Result<ExponentFit> {
    check_dim(horizons.len(), finals.len())?;
    let pts: Vec<(usize, f64)> =
        horizons.iter().zip(finals).filter(|(&t, _)| t >= FIT_MIN_HORIZON).map(|(&t, &v)| (t, v)).collect();
    if pts.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "exponent fit needs at least 4 horizons >= {FIT_MIN_HORIZON}, got {}",
            pts.len()
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|(t, _)| (*t as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.max(FIT_FLOOR).ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("exponent fit needs distinct horizons".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(ExponentFit { slope, intercept, r_squared, horizons: pts.iter().map(|(t, _)| *t).collect() })
}

/// Rows `t,node,value` (1-based) from per-node series `series[i][t]`.
pub fn write_series_csv<W: Write>(w: W, series: &[Vec<f64>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "node", "value"])?;
    let len = series.first().map_or(0, Vec::len);
    for t in 0..len {
        for (i, s) in series.iter().enumerate() {
            wr.write_record([(t + 1).to_string(), (i + 1).to_string(), format!("{:.16e}", s[t])])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Read back a `t,node,value` table into per-node series.
pub fn read_series_csv<R: std::io::Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let parse = |k: usize| -> Result<&str> { rec.get(k).ok_or_else(|| Error::Format("short row".into())) };
        let t: usize = parse(0)?.parse().map_err(|e| Error::Format(format!("t: {e}")))?;
        let i: usize = parse(1)?.parse().map_err(|e| Error::Format(format!("node: {e}")))?;
        let v: f64 = parse(2)?.parse().map_err(|e| Error::Format(format!("value: {e}")))?;
        if i == 0 || t == 0 {
            return Err(Error::Format("indices are 1-based".into()));
        }
        if out.len() < i {
            out.resize(i, Vec::new());
        }
        if out[i - 1].len() != t - 1 {
            return Err(Error::Format(format!("row t={t}, node={i} is out of order")));
        }
        out[i - 1].push(v);
    }
    Ok(out)
}

/// Headline numbers of a metric across horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "final")]
    pub final_value: f64,
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
    pub stderr: f64,
}
