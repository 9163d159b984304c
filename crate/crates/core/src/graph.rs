//! Communication topologies and their mixing matrices.
//!
//! A [`Graph`] is pure topology: `n` nodes and a set of ordered edges
//! `(j, i)` meaning node `j` sends to node `i`. Self-weights never appear as
//! edges; they live only on the diagonal of the [`MixingMatrix`].
//!
//! The built-in families (complete, path, cycle, random geometric, random
//! regular) are all symmetric, so maximum-degree weights on them are
//! doubly stochastic. [`MixingMatrix::from_dense`] accepts any
//! doubly-stochastic matrix for custom directed topologies.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::seed;

/// Attempts allowed to the random builders before giving up.
pub const MAX_BUILD_ATTEMPTS: usize = 1000;

/// Largest `n` for which sigma_2 is computed by a dense SVD.
pub const DENSE_SVD_MAX_N: usize = 64;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;
const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    Complete,
    Path,
    Cycle,
    RandomGeometric,
    RandomRegular,
    Custom,
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GraphFamily::Complete => "complete",
            GraphFamily::Path => "path",
            GraphFamily::Cycle => "cycle",
            GraphFamily::RandomGeometric => "random_geometric",
            GraphFamily::RandomRegular => "random_regular",
            GraphFamily::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// A strongly-connected directed graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphDoc", into = "GraphDoc")]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    family: GraphFamily,
}

/// Wire form: `{"n": int, "edges": [[j, i], ...], "family": string}`.
#[derive(Serialize, Deserialize)]
struct GraphDoc {
    n: usize,
    edges: Vec<[usize; 2]>,
    family: GraphFamily,
}

impl TryFrom<GraphDoc> for Graph {
    type Error = Error;

    fn try_from(doc: GraphDoc) -> Result<Self> {
        let edges = doc.edges.iter().map(|e| (e[0], e[1])).collect::<Vec<_>>();
        let mut g = Graph::custom(doc.n, &edges)?;
        g.family = doc.family;
        Ok(g)
    }
}

impl From<Graph> for GraphDoc {
    fn from(g: Graph) -> Self {
        GraphDoc {
            n: g.n,
            edges: g.edges.iter().map(|&(j, i)| [j, i]).collect(),
            family: g.family,
        }
    }
}

impl Graph {
    /// Build from an explicit edge list. Rejects self-loops, out-of-range
    /// indices, duplicates, and graphs that are not strongly connected.
    pub fn custom(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for &(j, i) in edges {
            if j >= n || i >= n {
                return Err(Error::InvalidParameter(format!("edge ({j},{i}) out of range for n = {n}")));
            }
            if j == i {
                return Err(Error::InvalidParameter(format!("self-loop at node {i}")));
            }
            if !set.insert((j, i)) {
                return Err(Error::InvalidParameter(format!("duplicate edge ({j},{i})")));
            }
        }
        let g = Graph { n, edges: set, family: GraphFamily::Custom };
        if !g.is_strongly_connected() {
            return Err(Error::NotStronglyConnected);
        }
        Ok(g)
    }

    fn from_undirected(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>, family: GraphFamily) -> Self {
        let mut edges = BTreeSet::new();
        for (a, b) in pairs {
            edges.insert((a, b));
            edges.insert((b, a));
        }
        Graph { n, edges, family }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> GraphFamily {
        self.family
    }

    /// Ordered edges `(j, i)`, sender first.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, j: usize, i: usize) -> bool {
        self.edges.contains(&(j, i))
    }

    /// In-neighbours `N_i = { j : (j, i) in E }`.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(_, t)| t == i).map(|&(s, _)| s).collect()
    }

    /// `d_i = |N_i|`.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(_, i) in &self.edges {
            d[i] += 1;
        }
        d
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(j, i)| self.edges.contains(&(i, j)))
    }

    /// Breadth-first reachability from every node.
    pub fn is_strongly_connected(&self) -> bool {
        let mut out = vec![Vec::new(); self.n];
        for &(j, i) in &self.edges {
            out[j].push(i);
        }
        (0..self.n).all(|src| {
            let mut seen = vec![false; self.n];
            seen[src] = true;
            let mut count = 1;
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for &v in &out[u] {
                    if !seen[v] {
                        seen[v] = true;
                        count += 1;
                        queue.push_back(v);
                    }
                }
            }
            count == self.n
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Every node talks to every other node.
pub fn build_complete(n: usize) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidParameter("complete graph needs n >= 1".into()));
    }
    let pairs = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b)));
    Ok(Graph::from_undirected(n, pairs, GraphFamily::Complete))
}

/// Bidirectional path `0 - 1 - ... - (n-1)`.
pub fn build_path(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("path graph needs n >= 2, got {n}")));
    }
    Ok(Graph::from_undirected(n, (0..n - 1).map(|a| (a, a + 1)), GraphFamily::Path))
}

/// Bidirectional cycle. For `n = 2` this coincides with the path.
pub fn build_cycle(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("cycle graph needs n >= 2, got {n}")));
    }
    Ok(Graph::from_undirected(n, (0..n).map(|a| (a, (a + 1) % n)), GraphFamily::Cycle))
}

/// Node positions for attempt `attempt` of [`build_random_geometric`].
pub fn random_geometric_points(n: usize, seed: u64, attempt: usize) -> Vec<[f64; 2]> {
    let mut rng = seed::stream(seed, &[attempt as u64]);
    (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
}

/// Nodes uniform in the unit square, linked when within `radius`.
/// Resamples with sub-seeds `(seed, attempt)` until strongly connected.
pub fn build_random_geometric(n: usize, radius: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidParameter("random geometric graph needs n >= 1".into()));
    }
    // any radius >= sqrt 2 links every pair of the unit square
    if !(radius > 0.0) || radius.is_nan() {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    for attempt in 0..MAX_BUILD_ATTEMPTS {
        let pts = random_geometric_points(n, seed, attempt);
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let d = ((pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)).sqrt();
                if d <= radius {
                    pairs.push((a, b));
                }
            }
        }
        let g = Graph::from_undirected(n, pairs, GraphFamily::RandomGeometric);
        if g.is_strongly_connected() {
            return Ok(g);
        }
    }
    Err(Error::RetryBudgetExhausted { what: "random geometric graph", attempts: MAX_BUILD_ATTEMPTS })
}

/// Uniform random simple `k`-regular graph by the pairing model, rejecting
/// non-simple pairings and disconnected outcomes.
pub fn build_random_regular(n: usize, k: usize, seed: u64) -> Result<Graph> {
    if n == 0 || k >= n || (n * k) % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "random regular graph needs k < n and n*k even (n = {n}, k = {k})"
        )));
    }
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    'attempts: for attempt in 0..MAX_BUILD_ATTEMPTS {
        let mut rng = seed::stream(seed, &[attempt as u64]);
        stubs.shuffle(&mut rng);
        let mut pairs = BTreeSet::new();
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !pairs.insert((a, b)) {
                continue 'attempts;
            }
        }
        let g = Graph::from_undirected(n, pairs, GraphFamily::RandomRegular);
        if g.is_strongly_connected() {
            return Ok(g);
        }
    }
    Err(Error::RetryBudgetExhausted { what: "random regular graph", attempts: MAX_BUILD_ATTEMPTS })
}

/// A nonnegative doubly-stochastic weight matrix with its cached second
/// singular value.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    sigma2: f64,
}

impl MixingMatrix {
    /// Validate and wrap a dense matrix.
    pub fn from_dense(w: DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        if n == 0 || w.ncols() != n {
            return Err(Error::NotDoublyStochastic(format!("shape {}x{}", w.nrows(), w.ncols())));
        }
        if let Some(v) = w.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::NotDoublyStochastic(format!("entry {v} is negative")));
        }
        for i in 0..n {
            let r: f64 = w.row(i).iter().sum();
            let c: f64 = w.column(i).iter().sum();
            if (r - 1.0).abs() > STOCHASTIC_TOL || (c - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotDoublyStochastic(format!("row/column {i} sums to {r}/{c}")));
            }
        }
        let sigma2 = second_singular_value(&w)?;
        if sigma2 >= 1.0 {
            return Err(Error::NotDoublyStochastic(format!("sigma_2 = {sigma2} is not below 1")));
        }
        Ok(MixingMatrix { w, sigma2 })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `out_i = sum_j w[i][j] * vectors[j]`, summed in index order.
    pub fn mix(&self, vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.n(), vectors.len())?;
        let m = vectors.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(self.n() * m);
        for v in vectors {
            check_dim(m, v.len())?;
            flat.extend_from_slice(v);
        }
        let mut out = vec![0.0; flat.len()];
        self.mix_flat(&flat, m, &mut out);
        Ok(out.chunks(m.max(1)).take(self.n()).map(<[f64]>::to_vec).collect())
    }

    /// Row-major variant of [`mix`](Self::mix): `input` and `out` hold `n`
    /// consecutive vectors of length `m`.
    pub fn mix_flat(&self, input: &[f64], m: usize, out: &mut [f64]) {
        let n = self.n();
        debug_assert_eq!(input.len(), n * m);
        debug_assert_eq!(out.len(), n * m);
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            row.fill(0.0);
            for j in 0..n {
                let w = self.w[(i, j)];
                if w != 0.0 {
                    for (o, x) in row.iter_mut().zip(&input[j * m..(j + 1) * m]) {
                        *o += w * x;
                    }
                }
            }
        }
    }
}

/// Maximum-degree weights: `1/(1+d_max)` on every edge and
/// `1 - d_i/(1+d_max)` on the diagonal.
pub fn max_degree_weights(g: &Graph) -> Result<MixingMatrix> {
    let n = g.n();
    let deg = g.in_degrees();
    let dmax = deg.iter().copied().max().unwrap_or(0);
    let denom = (1 + dmax) as f64;
    let mut w = DMatrix::zeros(n, n);
    for (j, i) in g.edges() {
        w[(i, j)] = 1.0 / denom;
    }
    for (i, &d) in deg.iter().enumerate() {
        // (1 + d_max - d_i)/(1 + d_max) keeps the complete graph exactly 1/n
        w[(i, i)] = (1 + dmax - d) as f64 / denom;
    }
    MixingMatrix::from_dense(w)
}

fn deflated(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let avg = 1.0 / n as f64;
    w.map(|x| x - avg)
}

/// Second-largest singular value of a doubly-stochastic matrix, i.e. the
/// largest singular value of `W - 11^T/n`. Dense SVD up to
/// [`DENSE_SVD_MAX_N`], power iteration above.
pub fn second_singular_value(w: &DMatrix<f64>) -> Result<f64> {
    if w.nrows() <= DENSE_SVD_MAX_N {
        Ok(second_singular_value_dense(w))
    } else {
        second_singular_value_power(w)
    }
}

pub fn second_singular_value_dense(w: &DMatrix<f64>) -> f64 {
    let m = deflated(w);
    if m.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    m.svd(false, false).singular_values.max()
}

/// Power iteration on `M^T M`, stopped when the eigen-residual falls below
/// 1e-10.
pub fn second_singular_value_power(w: &DMatrix<f64>) -> Result<f64> {
    let m = deflated(w);
    let mtm = m.transpose() * &m;
    let n = w.nrows();
    let mut rng = seed::stream(0x5eed, &[n as u64]);
    let mut v = nalgebra::DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    v /= v.norm();
    for _ in 0..POWER_MAX_ITER {
        let av = &mtm * &v;
        let lambda = v.dot(&av);
        let residual = (&av - &v * lambda).norm();
        if residual <= POWER_TOL {
            return Ok(lambda.max(0.0).sqrt());
        }
        let norm = av.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = av / norm;
    }
    Err(Error::NoConvergence { what: "sigma_2 power iteration", iterations: POWER_MAX_ITER })
}
