//! Data streams `(h_i(t), z_i(t))`: oblivious bounded data, exactly
//! realizable data, and adaptive adversaries that react to predictions.
//!
//! A [`DataTensor`] stores all `n × T` samples of an oblivious stream in
//! round-major order. Adaptive runs record the samples they actually drew
//! into a tensor too, so the metric pipeline treats both the same way.

use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm_sq, rank};
use crate::loss::{random_unit_vector, LossPoint};
use crate::seed::{self, Stream};

const MAX_RESAMPLES: usize = 10_000;
const RANK_TOL: f64 = 1e-10;
/// Smallest covariate norm `gen_exact` will emit.
pub const MIN_EXACT_NORM: f64 = 1e-6;

/// One covariate/outcome pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub h: Vec<f64>,
    pub z: f64,
}

impl Sample {
    pub fn new(h: Vec<f64>, z: f64) -> Self {
        Sample { h, z }
    }

    pub fn as_loss(&self) -> LossPoint<'_> {
        LossPoint::new(&self.h, self.z)
    }

    /// Membership in `{(h, z) : ‖h‖² ≤ α_h, |z| ≤ α_z}`.
    pub fn in_adversary_set(&self, alpha_h: f64, alpha_z: f64) -> bool {
        norm_sq(&self.h) <= alpha_h && self.z.abs() <= alpha_z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    Oblivious,
    Exact,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMeta {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub mode: DataMode,
    pub seed: u64,
    pub alpha_h: f64,
    pub alpha_z: f64,
    /// Planted exact solution (exact mode) or hidden generator (oblivious).
    pub y_star: Option<Vec<f64>>,
    pub sigma_noise: f64,
}

/// All samples of a run, indexed by `(round t, node i)` with 0-based `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTensor {
    meta: DataMeta,
    h: Vec<f64>,
    z: Vec<f64>,
}

impl DataTensor {
    /// An empty tensor to be filled round by round (adaptive runs).
    pub fn with_capacity(meta: DataMeta) -> Self {
        let cap = meta.n * meta.horizon;
        DataTensor { h: Vec::with_capacity(cap * meta.m), z: Vec::with_capacity(cap), meta }
    }

    /// Build from explicit rounds: `rounds[t][i]` is node `i`'s sample.
    pub fn from_rounds(meta: DataMeta, rounds: &[Vec<Sample>]) -> Result<Self> {
        check_dim(meta.horizon, rounds.len())?;
        let mut d = DataTensor::with_capacity(meta);
        for round in rounds {
            d.push_round(round)?;
        }
        Ok(d)
    }

    pub fn meta(&self) -> &DataMeta {
        &self.meta
    }

    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn m(&self) -> usize {
        self.meta.m
    }

    /// Number of complete rounds stored.
    pub fn rounds(&self) -> usize {
        self.z.len() / self.meta.n.max(1)
    }

    pub fn push_round(&mut self, samples: &[Sample]) -> Result<()> {
        check_dim(self.meta.n, samples.len())?;
        for s in samples {
            check_dim(self.meta.m, s.h.len())?;
        }
        for s in samples {
            self.h.extend_from_slice(&s.h);
            self.z.push(s.z);
        }
        Ok(())
    }

    pub fn h(&self, t: usize, i: usize) -> &[f64] {
        let m = self.meta.m;
        let k = t * self.meta.n + i;
        &self.h[k * m..(k + 1) * m]
    }

    pub fn z(&self, t: usize, i: usize) -> f64 {
        self.z[t * self.meta.n + i]
    }

    pub fn point(&self, t: usize, i: usize) -> LossPoint<'_> {
        LossPoint::new(self.h(t, i), self.z(t, i))
    }

    pub fn sample(&self, t: usize, i: usize) -> Sample {
        Sample::new(self.h(t, i).to_vec(), self.z(t, i))
    }

    /// Covariates of round `t` stacked as rows.
    pub fn round_matrix(&self, t: usize) -> Vec<Vec<f64>> {
        (0..self.meta.n).map(|i| self.h(t, i).to_vec()).collect()
    }

    pub fn round_rank(&self, t: usize) -> usize {
        rank(&self.round_matrix(t), RANK_TOL)
    }

    /// Every `(t, i)` pair in storage order.
    pub fn points(&self) -> impl Iterator<Item = LossPoint<'_>> {
        self.h.chunks_exact(self.meta.m.max(1)).zip(&self.z).map(|(h, &z)| LossPoint::new(h, z))
    }

    /// Total loss `Σ_t Σ_j θ_{j,t}(y)`.
    pub fn total_loss(&self, y: &[f64]) -> f64 {
        self.points().map(|p| p.value(y)).sum()
    }

    /// Round-`t` network loss `Σ_j θ_{j,t}(y)`.
    pub fn round_loss(&self, t: usize, y: &[f64]) -> f64 {
        (0..self.meta.n).map(|j| self.point(t, j).value(y)).sum()
    }

    /// `max |hᵀy − z|` over all samples: the residual bound realized at `y`.
    pub fn max_residual(&self, y: &[f64]) -> f64 {
        self.points().map(|p| p.residual(y).abs()).fold(0.0, f64::max)
    }

    // --- serialization -------------------------------------------------

    const MAGIC: &'static [u8; 8] = b"NRDTNSR1";

    /// Binary form: magic, meta JSON (length-prefixed), then every `h`
    /// and `z` as little-endian f64. Round-trips bit-exactly.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = serde_json::to_vec(&self.meta)?;
        w.write_all(Self::MAGIC)?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&(self.z.len() as u64).to_le_bytes())?;
        for x in self.h.iter().chain(&self.z) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("bad magic in data tensor file".into()));
        }
        let read_u64 = |r: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let meta_len = read_u64(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta: DataMeta = serde_json::from_slice(&meta)?;
        let count = read_u64(&mut r)? as usize;
        let mut read_f64s = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            let mut b = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut b)?;
                out.push(f64::from_le_bytes(b));
            }
            Ok(out)
        };
        let h = read_f64s(count * meta.m)?;
        let z = read_f64s(count)?;
        if count % meta.n.max(1) != 0 {
            return Err(Error::Format("sample count is not a multiple of n".into()));
        }
        Ok(DataTensor { meta, h, z })
    }

    /// CSV form: a `# {meta json}` line, then columns
    /// `t,i,h_1..h_m,z` with 1-based `t` and `i` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", serde_json::to_string(&self.meta)?)?;
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "i".to_string()];
        header.extend((1..=self.meta.m).map(|k| format!("h_{k}")));
        header.push("z".into());
        wr.write_record(&header)?;
        for t in 0..self.rounds() {
            for i in 0..self.meta.n {
                let mut rec = vec![(t + 1).to_string(), (i + 1).to_string()];
                rec.extend(self.h(t, i).iter().map(|x| format!("{x:.16e}")));
                rec.push(format!("{:.16e}", self.z(t, i)));
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut br = BufReader::new(r);
        let mut first = String::new();
        br.read_line(&mut first)?;
        let json = first
            .trim_end()
            .strip_prefix("# ")
            .ok_or_else(|| Error::Format("missing meta header line".into()))?;
        let meta: DataMeta = serde_json::from_str(json)?;
        let mut rd = csv::Reader::from_reader(br);
        let mut h = Vec::new();
        let mut z = Vec::new();
        for (k, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != meta.m + 3 {
                return Err(Error::Format(format!("row {k} has {} fields", rec.len())));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("row {k}: {e}")));
            let (t, i) = (k / meta.n + 1, k % meta.n + 1);
            if rec[0] != *t.to_string() || rec[1] != *i.to_string() {
                return Err(Error::Format(format!("row {k} is out of order")));
            }
            for f in rec.iter().skip(2).take(meta.m) {
                h.push(parse(f)?);
            }
            z.push(parse(&rec[meta.m + 2])?);
        }
        Ok(DataTensor { meta, h, z })
    }
}

/// Uniform in the ball of radius `sqrt(alpha_h)`, resampled in the rare case
/// rounding pushes `‖h‖²` past the bound.
fn draw_covariate(rng: &mut Stream, m: usize, alpha_h: f64) -> Vec<f64> {
    loop {
        let radius = rng.random::<f64>().powf(1.0 / m as f64) * alpha_h.sqrt();
        let mut h = random_unit_vector(m, rng);
        h.iter_mut().for_each(|x| *x *= radius);
        if norm_sq(&h) <= alpha_h {
            return h;
        }
    }
}

fn check_common(n: usize, m: usize, horizon: usize, alpha_h: f64) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidParameter("dimension m must be at least 1".into()));
    }
    if n < m {
        return Err(Error::RankUnattainable { n, m });
    }
    if horizon < 1 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if !(alpha_h > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha_h must be positive, got {alpha_h}")));
    }
    Ok(())
}

/// Round-1 covariates redrawn until they have full column rank.
fn full_rank_round(
    rng: &mut Stream,
    n: usize,
    m: usize,
    mut draw: impl FnMut(&mut Stream) -> Vec<f64>,
) -> Result<Vec<Vec<f64>>> {
    for _ in 0..MAX_RESAMPLES {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| draw(rng)).collect();
        if rank(&rows, RANK_TOL) == m {
            return Ok(rows);
        }
    }
    Err(Error::RetryBudgetExhausted { what: "full-rank first round", attempts: MAX_RESAMPLES })
}

/// Oblivious bounded data: `h` uniform in the `sqrt(alpha_h)`-ball, a
/// hidden `y₀ ~ N(0, I_m)` drawn once, and
/// `z = clamp(hᵀy₀ + N(0, sigma_noise²), ±alpha_z)`.
pub fn gen_oblivious(
    n: usize,
    m: usize,
    horizon: usize,
    alpha_h: f64,
    alpha_z: f64,
    sigma_noise: f64,
    seed: u64,
) -> Result<DataTensor> {
    check_common(n, m, horizon, alpha_h)?;
    if !(alpha_z > 0.0) || !(sigma_noise >= 0.0) {
        return Err(Error::InvalidParameter("alpha_z must be positive and sigma_noise non-negative".into()));
    }
    let mut rng = seed::stream(seed, &[0xDA7A]);
    let y0: Vec<f64> = (0..m).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let noise = Normal::new(0.0, sigma_noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let meta = DataMeta {
        n,
        m,
        horizon,
        mode: DataMode::Oblivious,
        seed,
        alpha_h,
        alpha_z,
        y_star: Some(y0.clone()),
        sigma_noise,
    };
    let mut data = DataTensor::with_capacity(meta);
    let outcome = |h: &[f64], rng: &mut Stream| (dot(h, &y0) + noise.sample(rng)).clamp(-alpha_z, alpha_z);
    let first = full_rank_round(&mut rng, n, m, |r| draw_covariate(r, m, alpha_h))?;
    let round: Vec<Sample> = first
        .into_iter()
        .map(|h| {
            let z = outcome(&h, &mut rng);
            Sample::new(h, z)
        })
        .collect();
    data.push_round(&round)?;
    for _ in 1..horizon {
        let round: Vec<Sample> = (0..n)
            .map(|_| {
                let h = draw_covariate(&mut rng, m, alpha_h);
                let z = outcome(&h, &mut rng);
                Sample::new(h, z)
            })
            .collect();
        data.push_round(&round)?;
    }
    Ok(data)
}

/// Exactly realizable data: `z = hᵀy_star` for every sample, with
/// `‖h‖ ≥ 1e-6` enforced by resampling.
pub fn gen_exact(n: usize, m: usize, horizon: usize, alpha_h: f64, y_star: &[f64], seed: u64) -> Result<DataTensor> {
    check_common(n, m, horizon, alpha_h)?;
    check_dim(m, y_star.len())?;
    let mut rng = seed::stream(seed, &[0xE8AC7]);
    let draw = |rng: &mut Stream| loop {
        let h = draw_covariate(rng, m, alpha_h);
        if norm_sq(&h) >= MIN_EXACT_NORM * MIN_EXACT_NORM {
            return h;
        }
    };
    let meta = DataMeta {
        n,
        m,
        horizon,
        mode: DataMode::Exact,
        seed,
        alpha_h,
        alpha_z: f64::INFINITY,
        y_star: Some(y_star.to_vec()),
        sigma_noise: 0.0,
    };
    let mut data = DataTensor::with_capacity(meta);
    let mut rounds = vec![full_rank_round(&mut rng, n, m, draw)?];
    for _ in 1..horizon {
        rounds.push((0..n).map(|_| draw(&mut rng)).collect());
    }
    for hs in rounds {
        let round: Vec<Sample> = hs
            .into_iter()
            .map(|h| {
                let z = dot(&h, y_star);
                Sample::new(h, z)
            })
            .collect();
        data.push_round(&round)?;
    }
    data.meta.alpha_z = data.z.iter().fold(0.0, |a: f64, z| a.max(z.abs()));
    Ok(data)
}

/// One past round as seen by an adaptive adversary at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub h: Vec<f64>,
    pub z: f64,
    /// The node's prediction in that round.
    pub x: Vec<f64>,
}

/// A data source that may react to a node's past predictions. It sees only
/// `(h, z, x)` history for its own node, never exploration directions.
pub trait AdaptiveAdversary: Send {
    fn next(&mut self, node: usize, round: usize, history: &[HistoryEntry]) -> Sample;

    /// Bounds `(alpha_h, alpha_z)` of the set every returned sample lies in.
    fn bounds(&self) -> (f64, f64);
}

/// Draws `h` uniformly in the `sqrt(alpha_h)`-ball and sets
/// `z = clamp(hᵀx_prev + alpha_z/2, ±alpha_z)`, with `x_prev` the node's
/// last prediction. With no history it falls back to an oblivious draw
/// around a hidden `y₀ ~ N(0, I)`.
#[derive(Debug, Clone)]
pub struct TrackingAdversary {
    alpha_h: f64,
    alpha_z: f64,
    rng: Stream,
    hidden: Option<Vec<f64>>,
}

impl AdaptiveAdversary for TrackingAdversary {
    fn next(&mut self, _node: usize, _round: usize, history: &[HistoryEntry]) -> Sample {
        let m = match (history.last(), &self.hidden) {
            (Some(e), _) => e.x.len(),
            (None, Some(y)) => y.len(),
            (None, None) => panic!("tracking adversary used before its dimension was fixed"),
        };
        let h = draw_covariate(&mut self.rng, m, self.alpha_h);
        let centre = match history.last() {
            Some(e) => dot(&h, &e.x) + self.alpha_z / 2.0,
            None => dot(&h, self.hidden.as_deref().expect("checked above")),
        };
        Sample::new(h, centre.clamp(-self.alpha_z, self.alpha_z))
    }

    fn bounds(&self) -> (f64, f64) {
        (self.alpha_h, self.alpha_z)
    }
}

/// The tracking strategy for dimension `m`, seeded for one node. Use
/// [`tracking_adversaries`] to get one independent instance per node.
pub fn make_tracking_adversary(m: usize, alpha_h: f64, alpha_z: f64, seed: u64) -> Result<TrackingAdversary> {
    if m == 0 || !(alpha_h > 0.0) || !(alpha_z > 0.0) {
        return Err(Error::InvalidParameter("tracking adversary needs m >= 1 and positive bounds".into()));
    }
    let mut rng = seed::stream(seed, &[0xADF]);
    let hidden = (0..m).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    Ok(TrackingAdversary { alpha_h, alpha_z, rng, hidden: Some(hidden) })
}

/// One tracking adversary per node, sub-seeded by `(seed, node)`.
pub fn tracking_adversaries(
    n: usize,
    m: usize,
    alpha_h: f64,
    alpha_z: f64,
    seed: u64,
) -> Result<Vec<Box<dyn AdaptiveAdversary>>> {
    (0..n)
        .map(|i| {
            make_tracking_adversary(m, alpha_h, alpha_z, seed::derive(seed, &[i as u64]))
                .map(|a| Box::new(a) as Box<dyn AdaptiveAdversary>)
        })
        .collect()
}
