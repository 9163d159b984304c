//! The six algorithm variants as round-synchronous node updates.
//!
//! Every round has the same shape at every node: a local step that builds
//! `ℓ_i(t)` from the node's own sample, a mixing step
//! `x_i(t+1) = Σ_j W_ij ℓ_j(t)`, an optional projection, and (constrained
//! variants only) a dual update. [`Network`] drives one round at a time;
//! [`run`] and [`run_adaptive`] drive a whole horizon and record a
//! [`RunTrace`].

use std::fmt;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AdaptiveAdversary, DataMeta, DataMode, DataTensor, HistoryEntry, Sample};
use crate::error::{check_dim, Error, Result};
use crate::graph::MixingMatrix;
use crate::linalg::{dist, dot, mean, norm_sq};
use crate::loss::{random_unit_vector, two_point_estimate_into, LossPoint};
use crate::projection::{hinge, Ball, DecisionSet, Polytope};
use crate::seed::{self, Stream};

/// Covariates with a smaller norm are skipped by the Kaczmarz step.
pub const ELR_MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Full-information gradient step.
    Fif,
    /// Two-point bandit feedback.
    Bf,
    /// Bandit feedback, adaptive adversary, projection onto `(1 − ξ)K`.
    BfAa,
    /// Full information with long-term constraints.
    Fifc,
    /// Bandit feedback with long-term constraints.
    Bfc,
    /// Exact regression by Kaczmarz steps.
    Elr,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::Fif, Variant::Bf, Variant::BfAa, Variant::Fifc, Variant::Bfc, Variant::Elr];

    pub fn is_bandit(self) -> bool {
        matches!(self, Variant::Bf | Variant::BfAa | Variant::Bfc)
    }

    pub fn is_constrained(self) -> bool {
        matches!(self, Variant::Fifc | Variant::Bfc)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fif => "fif",
            Variant::Bf => "bf",
            Variant::BfAa => "bf_aa",
            Variant::Fifc => "fifc",
            Variant::Bfc => "bfc",
            Variant::Elr => "elr",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Optional overrides from which [`AlgoParams`] are derived. Anything left
/// `None` takes the variant's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tuning {
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    /// BF only: `κ = kappa_factor · 2nm²α_h/(n − α_h)` when `kappa` is unset.
    pub kappa_factor: Option<f64>,
    pub c: Option<f64>,
    /// Outer radius `R`.
    pub radius: Option<f64>,
    /// Inner radius `r` with `B_r ⊆ K` (BF-AA).
    pub inner_radius: Option<f64>,
    pub constraints: Option<Polytope>,
}

/// Every scalar a variant needs, with the horizon-dependent ones already
/// derived from `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub variant: Variant,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub alpha_h: f64,
    pub beta: f64,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub c: Option<f64>,
    /// Step size.
    pub eta: f64,
    /// Dual regularization.
    pub pi: Option<f64>,
    /// Exploration radius.
    pub eps: Option<f64>,
    /// Shrinkage of the projection set.
    pub xi: Option<f64>,
    pub radius: Option<f64>,
    pub inner_radius: Option<f64>,
    pub constraints: Option<Polytope>,
}

/// Outcome of [`AlgoParams::validate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    /// Hypotheses the run depends on that do not hold.
    pub violations: Vec<String>,
    /// Conditions under which the run is still well defined but the rate
    /// guarantee no longer applies.
    pub warnings: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: Validation) {
        self.violations.extend(other.violations);
        self.warnings.extend(other.warnings);
    }
}

/// `2nm²α_h/(n − α_h)`, the lower bound on `κ` for BF. Infinite when
/// `α_h ≥ n`.
pub fn bf_kappa_bound(n: usize, m: usize, alpha_h: f64) -> f64 {
    let nf = n as f64;
    if alpha_h >= nf {
        return f64::INFINITY;
    }
    2.0 * nf * (m * m) as f64 * alpha_h / (nf - alpha_h)
}

impl AlgoParams {
    /// Fill in defaults and derive `η, π, ε, ξ` for horizon `T`.
    ///
    /// | variant | defaults | derived |
    /// |---|---|---|
    /// | FIF | β = 3/4 | η = 1/(α_h T^β) |
    /// | BF | β = 3/4, κ = 1.1 × bound | η = 1/(κ T^β), ε = 1/√T |
    /// | BF-AA | β = 1/2, κ = 1, R = 1, r = R | η = 1/(κ T^β), ε = 1/√T, ξ = ε/r |
    /// | FIFC | β = 1/2, c = 2, R = 2 | η = 1/(c s K_I² T^β), π = 1/T^β |
    /// | BFC | as FIFC, γ = β | ε = 1/T^γ, ξ = 1/(R T^γ) |
    /// | ELR | none | η = 1 (unused) |
    pub fn derive(variant: Variant, n: usize, m: usize, horizon: usize, alpha_h: f64, tuning: &Tuning) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        let t = horizon as f64;
        let mut p = AlgoParams {
            variant,
            n,
            m,
            horizon,
            alpha_h,
            beta: 0.75,
            gamma: None,
            kappa: None,
            c: None,
            eta: 1.0,
            pi: None,
            eps: None,
            xi: None,
            radius: None,
            inner_radius: None,
            constraints: None,
        };
        match variant {
            Variant::Fif => {
                p.beta = tuning.beta.unwrap_or(0.75);
                p.eta = 1.0 / (alpha_h * t.powf(p.beta));
            }
            Variant::Bf => {
                p.beta = tuning.beta.unwrap_or(0.75);
                let factor = tuning.kappa_factor.unwrap_or(1.1);
                let bound = bf_kappa_bound(n, m, alpha_h);
                let fallback = 2.0 * n as f64 * (m * m) as f64 * alpha_h;
                let kappa = tuning.kappa.unwrap_or(if bound.is_finite() { factor * bound } else { factor * fallback });
                p.kappa = Some(kappa);
                p.eps = Some(1.0 / t.sqrt());
                p.eta = 1.0 / (kappa * t.powf(p.beta));
            }
            Variant::BfAa => {
                p.beta = tuning.beta.unwrap_or(0.5);
                let kappa = tuning.kappa.unwrap_or(1.0);
                let radius = tuning.radius.unwrap_or(1.0);
                let inner = tuning.inner_radius.unwrap_or(radius);
                let eps = 1.0 / t.sqrt();
                p.kappa = Some(kappa);
                p.radius = Some(radius);
                p.inner_radius = Some(inner);
                p.eps = Some(eps);
                p.xi = Some(eps / inner);
                p.eta = 1.0 / (kappa * t.powf(p.beta));
            }
            Variant::Fifc | Variant::Bfc => {
                let k = tuning
                    .constraints
                    .clone()
                    .ok_or(Error::MissingComponent { variant: variant.name(), what: "constraint polytope" })?;
                p.beta = tuning.beta.unwrap_or(0.5);
                let c = tuning.c.unwrap_or(2.0);
                let radius = tuning.radius.unwrap_or(2.0);
                let tb = t.powf(p.beta);
                p.c = Some(c);
                p.radius = Some(radius);
                p.eta = 1.0 / (c * k.len() as f64 * k.bound().powi(2) * tb);
                p.pi = Some(1.0 / tb);
                if variant == Variant::Bfc {
                    let gamma = tuning.gamma.unwrap_or(p.beta);
                    let tg = t.powf(gamma);
                    p.gamma = Some(gamma);
                    p.eps = Some(1.0 / tg);
                    p.xi = Some(1.0 / (radius * tg));
                }
                p.constraints = Some(k);
            }
            Variant::Elr => {
                p.beta = 0.0;
            }
        }
        Ok(p)
    }

    pub fn fif(n: usize, m: usize, horizon: usize, alpha_h: f64, beta: f64) -> Result<Self> {
        Self::derive(Variant::Fif, n, m, horizon, alpha_h, &Tuning { beta: Some(beta), ..Tuning::default() })
    }

    /// BF with `κ = kappa_factor · 2nm²α_h/(n − α_h)`.
    pub fn bf(n: usize, m: usize, horizon: usize, alpha_h: f64, kappa_factor: f64) -> Result<Self> {
        Self::derive(Variant::Bf, n, m, horizon, alpha_h, &Tuning { kappa_factor: Some(kappa_factor), ..Tuning::default() })
    }

    /// BF-AA on the ball `K = B_R` with inner radius `r = R`.
    pub fn bf_aa(n: usize, m: usize, horizon: usize, alpha_h: f64, radius: f64) -> Result<Self> {
        Self::derive(Variant::BfAa, n, m, horizon, alpha_h, &Tuning { radius: Some(radius), ..Tuning::default() })
    }

    pub fn fifc(n: usize, m: usize, horizon: usize, alpha_h: f64, k: Polytope, radius: f64, beta: f64, c: f64) -> Result<Self> {
        let tuning = Tuning { beta: Some(beta), c: Some(c), radius: Some(radius), constraints: Some(k), ..Tuning::default() };
        Self::derive(Variant::Fifc, n, m, horizon, alpha_h, &tuning)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn bfc(n: usize, m: usize, horizon: usize, alpha_h: f64, k: Polytope, radius: f64, beta: f64, gamma: f64, c: f64) -> Result<Self> {
        let tuning = Tuning {
            beta: Some(beta),
            gamma: Some(gamma),
            c: Some(c),
            radius: Some(radius),
            constraints: Some(k),
            ..Tuning::default()
        };
        Self::derive(Variant::Bfc, n, m, horizon, alpha_h, &tuning)
    }

    pub fn elr(n: usize, m: usize, horizon: usize) -> Result<Self> {
        Self::derive(Variant::Elr, n, m, horizon, 1.0, &Tuning::default())
    }

    /// The set predictors are projected onto after mixing, if any.
    pub fn projection_set(&self) -> Result<Option<Box<dyn DecisionSet>>> {
        let radius = || self.radius.ok_or(Error::MissingComponent { variant: self.variant.name(), what: "radius R" });
        Ok(match self.variant {
            Variant::Fif | Variant::Bf | Variant::Elr => None,
            Variant::Fifc => Some(Box::new(Ball::new(radius()?)?)),
            Variant::Bfc | Variant::BfAa => {
                let xi = self.xi.ok_or(Error::MissingComponent { variant: self.variant.name(), what: "shrinkage xi" })?;
                Some(Ball::new(radius()?)?.shrink(xi)?)
            }
        })
    }

    /// Check every hypothesis the variant's guarantee rests on, without
    /// running anything.
    pub fn validate(&self) -> Validation {
        let mut v = Validation::default();
        let mut bad = |cond: bool, msg: String| {
            if cond {
                v.violations.push(msg);
            }
        };
        bad(self.n == 0, "n must be at least 1".into());
        bad(self.m == 0, "m must be at least 1".into());
        bad(self.horizon == 0, "horizon T must be at least 1".into());
        bad(!(self.alpha_h > 0.0), format!("alpha_h must be positive, got {}", self.alpha_h));
        bad(!(self.eta > 0.0 && self.eta.is_finite()), format!("step size eta must be positive and finite, got {}", self.eta));
        if self.variant != Variant::Elr {
            bad(!(self.beta > 0.0 && self.beta < 1.0), format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.variant.is_bandit() {
            bad(!self.eps.is_some_and(|e| e > 0.0), "exploration radius eps must be positive".into());
        }
        if let Some(xi) = self.xi {
            bad(!(0.0..1.0).contains(&xi), format!("shrinkage xi must lie in [0, 1), got {xi}"));
        }
        if let Some(r) = self.radius {
            bad(!(r > 0.0), format!("radius R must be positive, got {r}"));
        }
        match self.variant {
            Variant::Fif | Variant::Elr => {}
            Variant::Bf => {
                let bound = bf_kappa_bound(self.n, self.m, self.alpha_h);
                if bound.is_finite() {
                    let kappa = self.kappa.unwrap_or(0.0);
                    bad(!(kappa > bound), format!("kappa = {kappa} must exceed 2nm^2 alpha_h/(n - alpha_h) = {bound}"));
                } else {
                    v.warnings.push(format!(
                        "alpha_h = {} >= n = {}: the bandit rate hypothesis alpha_h < n fails; the run is still well defined",
                        self.alpha_h, self.n
                    ));
                }
            }
            Variant::BfAa => {
                let r = self.inner_radius.unwrap_or(0.0);
                bad(!(r > 0.0), format!("inner radius r must be positive, got {r}"));
                if let Some(big) = self.radius {
                    bad(r > big, format!("inner radius r = {r} exceeds R = {big}"));
                }
                if r > 0.0 {
                    let need = (1.0 / (r * r)).ceil();
                    bad((self.horizon as f64) < need, format!("horizon T = {} must be at least ceil(1/r^2) = {need}", self.horizon));
                }
                if self.beta != 0.5 || self.kappa != Some(1.0) {
                    v.warnings.push("the sqrt(T) tuning is beta = 1/2, kappa = 1".into());
                }
            }
            Variant::Fifc | Variant::Bfc => {
                let c = self.c.unwrap_or(0.0);
                bad(!(c > 1.0), format!("c must exceed 1, got {c}"));
                bad(self.constraints.is_none(), "constrained variant needs a constraint polytope".into());
                bad(!self.pi.is_some_and(|p| p > 0.0), "dual regularization pi must be positive".into());
                if let Some(k) = &self.constraints {
                    bad(k.dim() != self.m, format!("constraints have dimension {}, data has {}", k.dim(), self.m));
                }
                if self.variant == Variant::Bfc {
                    let gamma = self.gamma.unwrap_or(0.0);
                    bad(gamma < self.beta, format!("gamma = {gamma} must be at least beta = {}", self.beta));
                    if let (Some(eps), Some(xi), Some(r)) = (self.eps, self.xi, self.radius) {
                        bad(eps > xi * r * (1.0 + 1e-12), format!("eps = {eps} exceeds xi R = {}: query points can leave B_R", xi * r));
                    }
                }
            }
        }
        v
    }
}

/// One node's protocol state.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub x: Vec<f64>,
    /// Dual vector, present for constrained variants only.
    pub mu: Option<Vec<f64>>,
    /// Base of the node's private random streams; round `t` draws from
    /// `stream(stream_seed, [t])`.
    pub stream_seed: u64,
}

impl NodeState {
    pub fn rng_for_round(&self, round: usize) -> Stream {
        seed::stream(self.stream_seed, &[round as u64])
    }
}

/// `x − η ∇θ(x)`
pub fn local_step_fif(x: &[f64], p: &LossPoint<'_>, eta: f64) -> Result<Vec<f64>> {
    check_dim(p.dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    p.gradient_into(x, &mut out);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = xi - eta * *o;
    }
    Ok(out)
}

/// `x − η g` with `g` the two-point estimate along one fresh unit vector
/// drawn from `rng`.
pub fn local_step_bf<R: Rng + ?Sized>(x: &[f64], p: &LossPoint<'_>, eta: f64, eps: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_dim(p.dim(), x.len())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("exploration radius must be positive, got {eps}")));
    }
    let mut out = vec![0.0; x.len()];
    bandit_gradient_into(x, p, eps, rng, &mut out);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = xi - eta * *o;
    }
    Ok(out)
}

fn bandit_gradient_into<R: Rng + ?Sized>(x: &[f64], p: &LossPoint<'_>, eps: f64, rng: &mut R, out: &mut [f64]) {
    let u = random_unit_vector(x.len(), rng);
    two_point_estimate_into(p, x, &u, eps, x.len(), out);
}

/// How a constrained step sees the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feedback {
    Full,
    Bandit { eps: f64 },
}

/// `x − η (g + Σ_q μ_q ∂[k_qᵀx]_+)` with `g` the exact gradient or the
/// two-point estimate, depending on `feedback`.
pub fn local_step_constrained<R: Rng + ?Sized>(
    x: &[f64],
    mu: &[f64],
    p: &LossPoint<'_>,
    feedback: Feedback,
    eta: f64,
    constraints: &Polytope,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dim(p.dim(), x.len())?;
    check_dim(constraints.dim(), x.len())?;
    check_dim(constraints.len(), mu.len())?;
    let mut g = vec![0.0; x.len()];
    match feedback {
        Feedback::Full => p.gradient_into(x, &mut g),
        Feedback::Bandit { eps } => {
            if !(eps > 0.0) {
                return Err(Error::InvalidParameter(format!("exploration radius must be positive, got {eps}")));
            }
            bandit_gradient_into(x, p, eps, rng, &mut g);
        }
    }
    for (k, &muq) in constraints.constraints().iter().zip(mu) {
        if dot(k, x) > 0.0 {
            for (gi, ki) in g.iter_mut().zip(k) {
                *gi += muq * ki;
            }
        }
    }
    Ok(x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect())
}

/// `μ_q = [k_qᵀx]_+ / π`
pub fn dual_update(x_next: &[f64], constraints: &Polytope, pi: f64) -> Result<Vec<f64>> {
    if !(pi > 0.0) {
        return Err(Error::InvalidParameter(format!("pi must be positive, got {pi}")));
    }
    check_dim(constraints.dim(), x_next.len())?;
    Ok(constraints.constraints().iter().map(|k| hinge(dot(k, x_next)) / pi).collect())
}

/// Projection of `x` onto `{y : hᵀy = z}`. Returns `x` unchanged when
/// `‖h‖ < 1e-12`.
pub fn local_step_elr(x: &[f64], p: &LossPoint<'_>) -> Result<Vec<f64>> {
    check_dim(p.dim(), x.len())?;
    let hh = norm_sq(p.h);
    if hh.sqrt() < ELR_MIN_NORM {
        return Ok(x.to_vec());
    }
    let s = p.residual(x) / hh;
    Ok(x.iter().zip(p.h).map(|(xi, hi)| xi - s * hi).collect())
}

/// The intermediate vectors of one round, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    /// `ℓ_i(t)` per node.
    pub local: Vec<Vec<f64>>,
    /// `Σ_j W_ij ℓ_j(t)` per node, before any projection.
    pub mixed: Vec<Vec<f64>>,
}

/// All nodes of one run, advanced one round at a time.
#[derive(Debug)]
pub struct Network<'a> {
    params: &'a AlgoParams,
    w: &'a MixingMatrix,
    set: Option<Box<dyn DecisionSet>>,
    states: Vec<NodeState>,
    round: usize,
}

impl<'a> Network<'a> {
    /// `x_init` holds one start vector per node. Random streams derive from
    /// `(seed, node, round)`.
    pub fn new(params: &'a AlgoParams, w: &'a MixingMatrix, x_init: &[Vec<f64>], seed: u64) -> Result<Self> {
        check_dim(params.n, w.n())?;
        check_dim(params.n, x_init.len())?;
        for x in x_init {
            check_dim(params.m, x.len())?;
        }
        if let Some(k) = &params.constraints {
            check_dim(params.m, k.dim())?;
        }
        let s = if params.variant.is_constrained() {
            let k = params
                .constraints
                .as_ref()
                .ok_or(Error::MissingComponent { variant: params.variant.name(), what: "constraint polytope" })?;
            Some(k.len())
        } else {
            None
        };
        let states = x_init
            .iter()
            .enumerate()
            .map(|(i, x)| NodeState { x: x.clone(), mu: s.map(|s| vec![0.0; s]), stream_seed: seed::derive(seed, &[i as u64]) })
            .collect();
        Ok(Network { params, w, set: params.projection_set()?, states, round: 0 })
    }

    /// Same start vector at every node.
    pub fn with_common_start(params: &'a AlgoParams, w: &'a MixingMatrix, x0: &[f64], seed: u64) -> Result<Self> {
        Self::new(params, w, &vec![x0.to_vec(); params.n], seed)
    }

    /// Replace the projection set (BF-AA with a general `K`). The set given
    /// is projected onto as is; shrink it first if needed.
    pub fn with_projection_set(mut self, set: Box<dyn DecisionSet>) -> Self {
        self.set = Some(set);
        self
    }

    pub fn states(&self) -> &[NodeState] {
        &self.states
    }

    pub fn predictors(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.x.clone()).collect()
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    fn local_step(&self, i: usize, p: &LossPoint<'_>) -> Result<Vec<f64>> {
        let st = &self.states[i];
        let prm = self.params;
        let bandit_eps = || prm.eps.ok_or(Error::MissingComponent { variant: prm.variant.name(), what: "exploration radius" });
        match prm.variant {
            Variant::Fif => local_step_fif(&st.x, p, prm.eta),
            Variant::Bf | Variant::BfAa => local_step_bf(&st.x, p, prm.eta, bandit_eps()?, &mut st.rng_for_round(self.round)),
            Variant::Fifc | Variant::Bfc => {
                let feedback = if prm.variant == Variant::Bfc { Feedback::Bandit { eps: bandit_eps()? } } else { Feedback::Full };
                let k = prm.constraints.as_ref().expect("checked at construction");
                let mu = st.mu.as_deref().expect("constrained nodes carry a dual");
                local_step_constrained(&st.x, mu, p, feedback, prm.eta, k, &mut st.rng_for_round(self.round))
            }
            Variant::Elr => local_step_elr(&st.x, p),
        }
    }

    /// One round given node `i`'s sample `samples[i]`.
    pub fn step(&mut self, samples: &[LossPoint<'_>]) -> Result<RoundReport> {
        check_dim(self.params.n, samples.len())?;
        let local = (0..self.params.n).map(|i| self.local_step(i, &samples[i])).collect::<Result<Vec<_>>>()?;
        let mixed = self.w.mix(&local)?;
        for (st, y) in self.states.iter_mut().zip(&mixed) {
            st.x.copy_from_slice(y);
            if let Some(set) = &self.set {
                set.project_in_place(&mut st.x)?;
            }
            if let (Some(mu), Some(k), Some(pi)) = (st.mu.as_mut(), self.params.constraints.as_ref(), self.params.pi) {
                *mu = dual_update(&st.x, k, pi)?;
            }
        }
        self.round += 1;
        Ok(RoundReport { local, mixed })
    }
}

/// Per-round record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub params: AlgoParams,
    /// `x_i(t)` for every round and node (`T·n·m`, round-major), if kept.
    pub predictors: Option<Vec<f64>>,
    /// `Σ_j θ_{j,t}(x_i(t))`, `T·n` round-major.
    pub network_loss: Vec<f64>,
    /// `Σ_j |h_jᵀx_i(t) − z_j| / ‖h_j‖`, `T·n` round-major. NaN where some
    /// covariate of the round has zero norm.
    pub network_l1: Vec<f64>,
    /// `Σ_i ‖x_i(t) − x_avg(t)‖`
    pub disagreement: Vec<f64>,
    /// `Σ_i Σ_q [k_qᵀx_i(t)]_+`, zero for unconstrained runs.
    pub cv_increment: Vec<f64>,
    /// Predictors after the last round.
    pub final_predictors: Vec<Vec<f64>>,
}

impl RunTrace {
    fn new(params: &AlgoParams, record_predictors: bool) -> Self {
        let (n, m, t) = (params.n, params.m, params.horizon);
        RunTrace {
            params: params.clone(),
            predictors: record_predictors.then(|| Vec::with_capacity(t * n * m)),
            network_loss: Vec::with_capacity(t * n),
            network_l1: Vec::with_capacity(t * n),
            disagreement: Vec::with_capacity(t),
            cv_increment: Vec::with_capacity(t),
            final_predictors: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn rounds(&self) -> usize {
        self.disagreement.len()
    }

    pub fn network_loss(&self, t: usize, i: usize) -> f64 {
        self.network_loss[t * self.params.n + i]
    }

    pub fn network_l1(&self, t: usize, i: usize) -> f64 {
        self.network_l1[t * self.params.n + i]
    }

    pub fn predictor(&self, t: usize, i: usize) -> Option<&[f64]> {
        let m = self.params.m;
        let k = (t * self.params.n + i) * m;
        self.predictors.as_ref().map(|p| &p[k..k + m])
    }

    /// Record the pre-update predictors of one round against its samples.
    fn record(&mut self, xs: &[Vec<f64>], samples: &[LossPoint<'_>]) {
        for x in xs {
            if let Some(p) = self.predictors.as_mut() {
                p.extend_from_slice(x);
            }
            let mut l2 = 0.0;
            let mut l1 = 0.0;
            for s in samples {
                let r = s.residual(x);
                l2 += 0.5 * r * r;
                let hn = norm_sq(s.h).sqrt();
                l1 += if hn > 0.0 { r.abs() / hn } else { f64::NAN };
            }
            self.network_loss.push(l2);
            self.network_l1.push(l1);
        }
        let avg = mean(xs);
        self.disagreement.push(xs.iter().map(|x| dist(x, &avg)).sum());
        let cv = self.params.constraints.as_ref().map_or(0.0, |k| xs.iter().map(|x| k.total_violation(x)).sum());
        self.cv_increment.push(cv);
    }

    /// Columns `t,i,[x_1..x_m,]network_loss,disagreement,cv_increment` with
    /// 1-based `t` and `i`. Predictor columns appear only if recorded.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let (n, m) = (self.params.n, self.params.m);
        let mut header = vec!["t".to_string(), "i".to_string()];
        if self.predictors.is_some() {
            header.extend((1..=m).map(|k| format!("x_{k}")));
        }
        header.extend(["network_loss", "disagreement", "cv_increment"].map(String::from));
        wr.write_record(&header)?;
        for t in 0..self.rounds() {
            for i in 0..n {
                let mut rec = vec![(t + 1).to_string(), (i + 1).to_string()];
                if let Some(x) = self.predictor(t, i) {
                    rec.extend(x.iter().map(|v| format!("{v:.16e}")));
                }
                rec.push(format!("{:.16e}", self.network_loss(t, i)));
                rec.push(format!("{:.16e}", self.disagreement[t]));
                rec.push(format!("{:.16e}", self.cv_increment[t]));
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Sidecar JSON holding the parameter snapshot.
    pub fn write_params_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.params)?;
        Ok(())
    }
}

/// Knobs of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Start vectors; `None` means the zero vector at every node.
    pub x_init: Option<Vec<Vec<f64>>>,
    pub seed: u64,
    pub record_predictors: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { x_init: None, seed: 0, record_predictors: true }
    }
}

fn start_vectors(params: &AlgoParams, opts: &RunOptions) -> Vec<Vec<f64>> {
    opts.x_init.clone().unwrap_or_else(|| vec![vec![0.0; params.m]; params.n])
}

/// Run `params.horizon` rounds on a fixed data stream.
pub fn run(params: &AlgoParams, w: &MixingMatrix, data: &DataTensor, opts: &RunOptions) -> Result<RunTrace> {
    check_dim(params.n, data.n())?;
    check_dim(params.m, data.m())?;
    if data.rounds() < params.horizon {
        return Err(Error::DimensionMismatch { expected: params.horizon, actual: data.rounds() });
    }
    let mut net = Network::new(params, w, &start_vectors(params, opts), opts.seed)?;
    let mut trace = RunTrace::new(params, opts.record_predictors);
    for t in 0..params.horizon {
        let samples: Vec<LossPoint<'_>> = (0..params.n).map(|i| data.point(t, i)).collect();
        trace.record(&net.predictors(), &samples);
        net.step(&samples)?;
    }
    trace.final_predictors = net.predictors();
    Ok(trace)
}

/// Run against one adaptive adversary per node. Each adversary sees only
/// its own node's `(h, z, x)` history. Returns the trace and the samples
/// actually drawn.
pub fn run_adaptive(
    params: &AlgoParams,
    w: &MixingMatrix,
    adversaries: &mut [Box<dyn AdaptiveAdversary>],
    opts: &RunOptions,
) -> Result<(RunTrace, DataTensor)> {
    check_dim(params.n, adversaries.len())?;
    let (alpha_h, alpha_z) = adversaries.first().map_or((params.alpha_h, f64::INFINITY), |a| a.bounds());
    let meta = DataMeta {
        n: params.n,
        m: params.m,
        horizon: params.horizon,
        mode: DataMode::Adaptive,
        seed: opts.seed,
        alpha_h,
        alpha_z,
        y_star: None,
        sigma_noise: 0.0,
    };
    let mut data = DataTensor::with_capacity(meta);
    let mut net = Network::new(params, w, &start_vectors(params, opts), opts.seed)?;
    let mut trace = RunTrace::new(params, opts.record_predictors);
    let mut history: Vec<Vec<HistoryEntry>> = vec![Vec::with_capacity(params.horizon); params.n];
    for t in 0..params.horizon {
        let round: Vec<Sample> = adversaries.iter_mut().enumerate().map(|(i, a)| a.next(i, t, &history[i])).collect();
        for s in &round {
            check_dim(params.m, s.h.len())?;
        }
        let xs = net.predictors();
        let samples: Vec<LossPoint<'_>> = round.iter().map(Sample::as_loss).collect();
        trace.record(&xs, &samples);
        net.step(&samples)?;
        for ((hist, s), x) in history.iter_mut().zip(&round).zip(xs) {
            hist.push(HistoryEntry { h: s.h.clone(), z: s.z, x });
        }
        data.push_round(&round)?;
    }
    trace.final_predictors = net.predictors();
    Ok((trace, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_exact, gen_oblivious, tracking_adversaries};
    use crate::graph::{build_complete, build_path, max_degree_weights};
    use crate::linalg::norm;
    use crate::loss::{random_ball_vector, smoothed_loss_mc};
    use approx::assert_abs_diff_eq;

    fn orthant() -> Polytope {
        Polytope::new(vec![vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn fif_step_examples() {
        let p = LossPoint::new(&[1.0], 0.0);
        assert_eq!(local_step_fif(&[1.0], &p, 0.5).unwrap(), vec![0.5]);
        let q = LossPoint::new(&[1.0, 2.0], 5.0);
        assert_eq!(local_step_fif(&[1.0, 2.0], &q, 0.3).unwrap(), vec![1.0, 2.0]);
        assert!(local_step_fif(&[1.0], &q, 0.3).is_err());
    }

    #[test]
    fn fif_step_matches_finite_difference_gradient() {
        let mut rng = seed::stream(1, &[]);
        for _ in 0..100 {
            let h = random_ball_vector(3, &mut rng);
            let x = random_ball_vector(3, &mut rng).iter().map(|v| v * 3.0).collect::<Vec<_>>();
            let p = LossPoint::new(&h, 0.4);
            let l = local_step_fif(&x, &p, 0.2).unwrap();
            for k in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += 1e-5;
                xm[k] -= 1e-5;
                let fd = (p.value(&xp) - p.value(&xm)) / 2e-5;
                assert!((l[k] - (x[k] - 0.2 * fd)).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn bf_step_at_exact_solution_is_small() {
        let mut rng = seed::stream(2, &[]);
        let h = [0.5, -0.2, 0.1];
        let ys = [1.0, 2.0, 3.0];
        let p = LossPoint::new(&h, dot(&h, &ys));
        let (eta, eps) = (0.3, 0.05);
        for _ in 0..100 {
            let l = local_step_bf(&ys, &p, eta, eps, &mut rng).unwrap();
            assert!(dist(&l, &ys) <= eta * 3.0 * norm_sq(&h) * eps + 1e-15);
        }
    }

    #[test]
    fn bf_step_is_replayable() {
        let p = LossPoint::new(&[0.5, 0.5], 1.0);
        let a = local_step_bf(&[0.1, 0.2], &p, 0.1, 0.1, &mut seed::stream(5, &[1])).unwrap();
        let b = local_step_bf(&[0.1, 0.2], &p, 0.1, 0.1, &mut seed::stream(5, &[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bf_step_mean_direction_matches_smoothed_gradient() {
        // mean over redraws of (x − ℓ)/η against a central difference of the
        // smoothed-loss oracle, with common random numbers across the two sides
        let h = [0.8, -0.4];
        let p = LossPoint::new(&h, 0.3);
        let x = [0.5, 1.0];
        let (eta, eps) = (0.5, 0.3);
        let draws = 10_000;
        let mut rng = seed::stream(6, &[]);
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..draws {
            let l = local_step_bf(&x, &p, eta, eps, &mut rng).unwrap();
            for k in 0..2 {
                let g = (x[k] - l[k]) / eta;
                sum[k] += g;
                sq[k] += g * g;
            }
        }
        let step = 1e-3;
        for k in 0..2 {
            let mean = sum[k] / draws as f64;
            let se = ((sq[k] / draws as f64 - mean * mean) / draws as f64).sqrt();
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += step;
            xm[k] -= step;
            let fd = (smoothed_loss_mc(&p, &xp, eps, 200_000, 7) - smoothed_loss_mc(&p, &xm, eps, 200_000, 7)) / (2.0 * step);
            assert!((mean - fd).abs() <= 3.0 * se + 1e-3, "coord {k}: {mean} vs {fd} (se {se})");
        }
    }

    #[test]
    fn constrained_step_examples() {
        let k = orthant();
        let mut rng = seed::stream(0, &[]);
        let p = LossPoint::new(&[0.3, 0.7], 0.9);
        let x = [0.2, -0.5];
        let a = local_step_constrained(&x, &[0.0], &p, Feedback::Full, 0.1, &k, &mut rng).unwrap();
        assert_eq!(a, local_step_fif(&x, &p, 0.1).unwrap());
        let feasible = [-0.2, 0.4];
        let b = local_step_constrained(&feasible, &[5.0], &p, Feedback::Full, 0.1, &k, &mut rng).unwrap();
        assert_eq!(b, local_step_fif(&feasible, &p, 0.1).unwrap());
        // zero data gradient: h ⟂ x and z = 0
        let zero = LossPoint::new(&[0.0, 1.0], 0.0);
        let c = local_step_constrained(&[1.0, 0.0], &[2.0], &zero, Feedback::Full, 0.1, &k, &mut rng).unwrap();
        assert_abs_diff_eq!(c[0], 0.8, epsilon = 1e-15);
        assert_eq!(c[1], 0.0);
        assert!(local_step_constrained(&[1.0, 0.0], &[2.0, 1.0], &zero, Feedback::Full, 0.1, &k, &mut rng).is_err());
    }

    #[test]
    fn dual_update_examples() {
        let k = orthant();
        assert_eq!(dual_update(&[-1.0, 3.0], &k, 0.1).unwrap(), vec![0.0]);
        assert_abs_diff_eq!(dual_update(&[0.3, 9.0], &k, 0.1).unwrap()[0], 3.0, epsilon = 1e-12);
        let full = dual_update(&[0.3, 9.0], &k, 0.2).unwrap()[0];
        let half = dual_update(&[0.3, 9.0], &k, 0.1).unwrap()[0];
        assert_abs_diff_eq!(half, 2.0 * full, epsilon = 1e-12);
        assert!(dual_update(&[0.3, 9.0], &k, 0.0).is_err());
    }

    #[test]
    fn elr_step_examples() {
        let p = LossPoint::new(&[1.0, 0.0], 3.0);
        assert_eq!(local_step_elr(&[0.0, 5.0], &p).unwrap(), vec![3.0, 5.0]);
        assert_eq!(local_step_elr(&[3.0, -1.0], &p).unwrap(), vec![3.0, -1.0]);
        let zero = LossPoint::new(&[0.0, 0.0], 1.0);
        assert_eq!(local_step_elr(&[0.5, 0.5], &zero).unwrap(), vec![0.5, 0.5]);
        let mut rng = seed::stream(3, &[]);
        for _ in 0..1000 {
            let h = random_ball_vector(4, &mut rng);
            let x = random_ball_vector(4, &mut rng);
            let p = LossPoint::new(&h, 0.37);
            let l = local_step_elr(&x, &p).unwrap();
            assert!(p.residual(&l).abs() <= 1e-10);
        }
    }

    #[test]
    fn derived_parameters() {
        let fif = AlgoParams::fif(5, 3, 256, 1.0, 0.75).unwrap();
        assert_abs_diff_eq!(fif.eta, 1.0 / 64.0, epsilon = 1e-15);
        let bf = AlgoParams::bf(8, 3, 256, 1.0, 1.1).unwrap();
        let bound = 2.0 * 8.0 * 9.0 / 7.0;
        assert_abs_diff_eq!(bf.kappa.unwrap(), 1.1 * bound, epsilon = 1e-12);
        assert_abs_diff_eq!(bf.eps.unwrap(), 1.0 / 16.0, epsilon = 1e-15);
        assert!(bf.validate().is_ok());
        let aa = AlgoParams::bf_aa(5, 2, 256, 1.0, 1.0).unwrap();
        assert_eq!(aa.xi, Some(1.0 / 16.0));
        assert_abs_diff_eq!(aa.eta, 1.0 / 16.0, epsilon = 1e-15);
        let k = Polytope::new(vec![vec![1.0, 0.0], vec![0.0, 0.5]]).unwrap();
        let fifc = AlgoParams::fifc(3, 2, 256, 1.0, k.clone(), 2.0, 0.5, 2.0).unwrap();
        assert_abs_diff_eq!(fifc.eta, 1.0 / (2.0 * 2.0 * 1.0 * 16.0), epsilon = 1e-15);
        assert_abs_diff_eq!(fifc.pi.unwrap(), 1.0 / 16.0, epsilon = 1e-15);
        let bfc = AlgoParams::bfc(3, 2, 256, 1.0, k, 2.0, 0.5, 0.5, 2.0).unwrap();
        assert_abs_diff_eq!(bfc.eps.unwrap(), 1.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bfc.xi.unwrap(), 1.0 / 32.0, epsilon = 1e-15);
        assert!(bfc.validate().is_ok());
        assert!(AlgoParams::derive(Variant::Fifc, 3, 2, 10, 1.0, &Tuning::default()).is_err());
    }

    #[test]
    fn validation_catches_broken_hypotheses() {
        let bf = AlgoParams::bf(4, 2, 64, 5.0, 1.1).unwrap();
        let v = bf.validate();
        assert!(v.is_ok());
        assert!(v.warnings.iter().any(|w| w.contains("alpha_h < n")));
        let mut low = AlgoParams::bf(8, 2, 64, 1.0, 1.1).unwrap();
        low.kappa = Some(1.0);
        assert!(!low.validate().is_ok());
        let k = Polytope::new(vec![vec![1.0, 0.0]]).unwrap();
        let c1 = AlgoParams::fifc(3, 2, 64, 1.0, k.clone(), 2.0, 0.5, 1.0).unwrap();
        assert!(c1.validate().violations.iter().any(|v| v.contains("c must exceed 1")));
        let short = AlgoParams::derive(
            Variant::BfAa,
            3,
            2,
            3,
            1.0,
            &Tuning { radius: Some(1.0), inner_radius: Some(0.5), ..Tuning::default() },
        )
        .unwrap();
        assert!(short.validate().violations.iter().any(|v| v.contains("ceil(1/r^2)")));
        let bad_gamma = AlgoParams::bfc(3, 2, 64, 1.0, k, 2.0, 0.5, 0.4, 2.0).unwrap();
        assert!(bad_gamma.validate().violations.iter().any(|v| v.contains("gamma")));
        assert!(AlgoParams::elr(3, 2, 10).unwrap().validate().is_ok());
    }

    #[test]
    fn complete_graph_forces_consensus() {
        let g = build_complete(4).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let data = gen_oblivious(4, 2, 30, 1.0, 5.0, 0.1, 3).unwrap();
        let k = Polytope::new(vec![vec![1.0, 1.0]]).unwrap();
        let params = [
            AlgoParams::fif(4, 2, 30, 1.0, 0.75).unwrap(),
            AlgoParams::bf(4, 2, 30, 1.0, 1.1).unwrap(),
            AlgoParams::bf_aa(4, 2, 30, 1.0, 1.0).unwrap(),
            AlgoParams::fifc(4, 2, 30, 1.0, k.clone(), 2.0, 0.5, 2.0).unwrap(),
            AlgoParams::bfc(4, 2, 30, 1.0, k, 2.0, 0.5, 0.5, 2.0).unwrap(),
            AlgoParams::elr(4, 2, 30).unwrap(),
        ];
        for p in &params {
            let mut net = Network::with_common_start(p, &w, &[0.0, 0.0], 9).unwrap();
            for t in 0..30 {
                let samples: Vec<_> = (0..4).map(|i| data.point(t, i)).collect();
                net.step(&samples).unwrap();
                let xs = net.predictors();
                for x in &xs[1..] {
                    assert!(dist(x, &xs[0]) <= 1e-12, "{} diverged", p.variant);
                }
            }
        }
    }

    #[test]
    fn single_node_fif_is_online_gradient_descent() {
        let g = build_complete(1).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let data = gen_oblivious(1, 1, 3, 1.0, 5.0, 0.0, 2).unwrap();
        let p = AlgoParams::fif(1, 1, 3, 1.0, 0.75).unwrap();
        let trace = run(&p, &w, &data, &RunOptions { x_init: Some(vec![vec![0.7]]), ..RunOptions::default() }).unwrap();
        let (h, z) = (data.h(0, 0)[0], data.z(0, 0));
        let expect = 0.7 - p.eta * h * (h * 0.7 - z);
        assert_abs_diff_eq!(trace.predictor(1, 0).unwrap()[0], expect, epsilon = 1e-15);
    }

    #[test]
    fn projection_postconditions_hold_every_round() {
        let g = build_path(5).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let data = gen_oblivious(5, 2, 200, 1.0, 5.0, 0.1, 4).unwrap();
        let k = Polytope::random(3, 2, 1.0, 5).unwrap();
        let fifc = AlgoParams::fifc(5, 2, 200, 1.0, k.clone(), 0.5, 0.5, 2.0).unwrap();
        let bfc = AlgoParams::bfc(5, 2, 200, 1.0, k, 0.5, 0.5, 0.5, 2.0).unwrap();
        let aa = AlgoParams::bf_aa(5, 2, 200, 1.0, 0.3).unwrap();
        for (p, limit) in [(&fifc, 0.5), (&bfc, 0.5 * (1.0 - bfc.xi.unwrap())), (&aa, 0.3 * (1.0 - aa.xi.unwrap()))] {
            let mut net = Network::with_common_start(p, &w, &[0.0, 0.0], 1).unwrap();
            for t in 0..200 {
                let samples: Vec<_> = (0..5).map(|i| data.point(t, i)).collect();
                net.step(&samples).unwrap();
                for st in net.states() {
                    assert!(norm(&st.x) <= limit + 1e-12);
                    if let (Some(mu), Some(kk)) = (&st.mu, &p.constraints) {
                        assert_eq!(mu, &dual_update(&st.x, kk, p.pi.unwrap()).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn mixing_preserves_the_mean_of_local_vectors() {
        let g = build_path(6).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let data = gen_oblivious(6, 3, 50, 1.0, 5.0, 0.1, 6).unwrap();
        for p in [AlgoParams::fif(6, 3, 50, 1.0, 0.75).unwrap(), AlgoParams::bf(6, 3, 50, 1.0, 1.1).unwrap(), AlgoParams::elr(6, 3, 50).unwrap()] {
            let mut net = Network::with_common_start(&p, &w, &[1.0, -1.0, 0.5], 2).unwrap();
            for t in 0..50 {
                let samples: Vec<_> = (0..6).map(|i| data.point(t, i)).collect();
                let r = net.step(&samples).unwrap();
                assert!(dist(&mean(&r.local), &mean(&r.mixed)) <= 1e-12);
            }
        }
    }

    #[test]
    fn elr_is_monotone_on_exact_data() {
        let g = build_path(5).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let ys = [1.0, -2.0, 0.5];
        let data = gen_exact(5, 3, 300, 1.0, &ys, 8).unwrap();
        let p = AlgoParams::elr(5, 3, 300).unwrap();
        let mut net = Network::with_common_start(&p, &w, &[0.0; 3], 0).unwrap();
        let lyap = |net: &Network<'_>| net.states().iter().map(|s| dist(&s.x, &ys).powi(2)).sum::<f64>();
        let mut prev = lyap(&net);
        for t in 0..300 {
            let samples: Vec<_> = (0..5).map(|i| data.point(t, i)).collect();
            net.step(&samples).unwrap();
            let now = lyap(&net);
            assert!(now <= prev + 1e-10);
            prev = now;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn elr_started_at_solution_has_zero_loss() {
        let g = build_path(4).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let ys = vec![0.25, -0.5];
        let data = gen_exact(4, 2, 40, 1.0, &ys, 9).unwrap();
        let p = AlgoParams::elr(4, 2, 40).unwrap();
        let trace = run(&p, &w, &data, &RunOptions { x_init: Some(vec![ys.clone(); 4]), ..RunOptions::default() }).unwrap();
        assert!(trace.network_loss.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn trace_shapes_and_single_round() {
        let g = build_path(3).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let data = gen_oblivious(3, 2, 1, 1.0, 5.0, 0.1, 10).unwrap();
        let p = AlgoParams::fif(3, 2, 1, 1.0, 0.75).unwrap();
        let tr = run(&p, &w, &data, &RunOptions::default()).unwrap();
        assert_eq!(tr.rounds(), 1);
        assert_eq!(tr.predictors.as_ref().unwrap(), &vec![0.0; 6]);
        let z2: f64 = (0..3).map(|j| 0.5 * data.z(0, j).powi(2)).sum();
        for i in 0..3 {
            assert_abs_diff_eq!(tr.network_loss(0, i), z2, epsilon = 1e-15);
        }
        assert_eq!(tr.disagreement, vec![0.0]);
    }

    #[test]
    fn bandit_runs_replay_exactly() {
        let g = build_path(4).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let data = gen_oblivious(4, 2, 100, 1.0, 5.0, 0.1, 11).unwrap();
        let p = AlgoParams::bf(4, 2, 100, 1.0, 1.1).unwrap();
        let opts = RunOptions { seed: 42, ..RunOptions::default() };
        let a = run(&p, &w, &data, &opts).unwrap();
        let b = run(&p, &w, &data, &opts).unwrap();
        assert_eq!(a, b);
        let c = run(&p, &w, &data, &RunOptions { seed: 43, ..RunOptions::default() }).unwrap();
        assert_ne!(a.final_predictors, c.final_predictors);
    }

    #[test]
    fn adaptive_run_records_the_realized_stream() {
        let g = build_path(3).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let p = AlgoParams::bf_aa(3, 2, 64, 1.0, 1.0).unwrap();
        let mut adv = tracking_adversaries(3, 2, 1.0, 2.0, 5).unwrap();
        let (trace, data) = run_adaptive(&p, &w, &mut adv, &RunOptions { seed: 1, ..RunOptions::default() }).unwrap();
        assert_eq!(data.rounds(), 64);
        for p in data.points() {
            assert!(norm_sq(p.h) <= 1.0 && p.z.abs() <= 2.0);
        }
        for t in 0..64 {
            for i in 0..3 {
                let x = trace.predictor(t, i).unwrap();
                let l: f64 = (0..3).map(|j| data.point(t, j).value(x)).sum();
                assert_abs_diff_eq!(l, trace.network_loss(t, i), epsilon = 1e-12);
            }
        }
        // the adversary reacts to the previous predictor
        for t in 1..64 {
            let x_prev = trace.predictor(t - 1, 0).unwrap();
            let s = data.sample(t, 0);
            let expect = (dot(&s.h, x_prev) + 1.0).clamp(-2.0, 2.0);
            assert_abs_diff_eq!(s.z, expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn trace_csv_and_sidecar() {
        let g = build_path(2).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let data = gen_oblivious(2, 1, 3, 1.0, 5.0, 0.1, 12).unwrap();
        let p = AlgoParams::fif(2, 1, 3, 1.0, 0.75).unwrap();
        let tr = run(&p, &w, &data, &RunOptions::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,i,x_1,network_loss,disagreement,cv_increment");
        assert_eq!(lines.len(), 1 + 3 * 2);
        let mut js = Vec::new();
        tr.write_params_json(&mut js).unwrap();
        let back: AlgoParams = serde_json::from_slice(&js).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn zero_gradient_disagreement_contracts_by_sigma2() {
        let g = build_path(5).unwrap();
        let w = max_degree_weights(&g).unwrap();
        let p = AlgoParams::fif(5, 1, 40, 1.0, 0.75).unwrap();
        let x0: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let mut net = Network::new(&p, &w, &x0, 0).unwrap();
        let zero = [0.0];
        let spread = |xs: &[Vec<f64>]| {
            let a = mean(xs);
            xs.iter().map(|x| dist(x, &a).powi(2)).sum::<f64>().sqrt()
        };
        let mut prev = spread(&net.predictors());
        for _ in 0..40 {
            let samples = vec![LossPoint::new(&zero, 0.0); 5];
            net.step(&samples).unwrap();
            let now = spread(&net.predictors());
            assert!(now <= w.sigma2() * prev + 1e-12);
            prev = now;
        }
    }
}
