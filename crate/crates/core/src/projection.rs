//! Euclidean projections: origin-centred balls, the cone
//! `K = {y : k_qᵀy ≤ 0}`, their intersection, hinge subgradients, and the
//! distance to the solution set of an exactly realizable stream.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataTensor;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, norm_sq, pinv};
use crate::loss::random_unit_vector;
use crate::seed;

/// Default sweep cap for Dykstra's method.
pub const DYKSTRA_MAX_ITER: usize = 100_000;
/// Default convergence tolerance for Dykstra's method.
pub const DYKSTRA_TOL: f64 = 1e-12;

/// Nearest point of the origin-centred ball of radius `r`.
pub fn project_ball(x: &[f64], r: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    project_ball_in_place(&mut y, r);
    y
}

pub fn project_ball_in_place(x: &mut [f64], r: f64) {
    let nx = norm(x);
    if nx > r {
        x.iter_mut().for_each(|v| *v = *v * r / nx);
    }
}

/// `max(0, a)`
pub fn hinge(a: f64) -> f64 {
    a.max(0.0)
}

/// A subgradient of `y ↦ [kᵀy]_+` at `x`: `k` when `kᵀx > 0`, otherwise
/// (boundary included) the zero vector.
pub fn hinge_subgrad(k: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_dim(k.len(), x.len())?;
    Ok(if dot(k, x) > 0.0 { k.to_vec() } else { vec![0.0; k.len()] })
}

/// A closed convex set supporting projection.
pub trait DecisionSet: fmt::Debug + Send + Sync {
    /// Nearest point of the set.
    fn project(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn project_in_place(&self, x: &mut [f64]) -> Result<()> {
        let p = self.project(x)?;
        x.copy_from_slice(&p);
        Ok(())
    }

    fn contains(&self, x: &[f64], tol: f64) -> bool;

    /// The set scaled by `1 − ξ` about the origin.
    fn shrink(&self, xi: f64) -> Result<Box<dyn DecisionSet>>;
}

fn check_xi(xi: f64) -> Result<()> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::InvalidParameter(format!("shrink factor must lie in [0, 1), got {xi}")));
    }
    Ok(())
}

/// `{x : ‖x‖ ≤ R}`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    radius: f64,
}

impl Ball {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Ball { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Ball of radius `(1 − ξ)R`.
pub fn shrink_ball(r: f64, xi: f64) -> Result<Ball> {
    check_xi(xi)?;
    Ball::new((1.0 - xi) * r)
}

impl DecisionSet for Ball {
    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(project_ball(x, self.radius))
    }

    fn project_in_place(&self, x: &mut [f64]) -> Result<()> {
        project_ball_in_place(x, self.radius);
        Ok(())
    }

    fn contains(&self, x: &[f64], tol: f64) -> bool {
        norm(x) <= self.radius + tol
    }

    fn shrink(&self, xi: f64) -> Result<Box<dyn DecisionSet>> {
        Ok(Box::new(shrink_ball(self.radius, xi)?))
    }
}

/// The cone `{y : k_qᵀy ≤ 0, q = 1..s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeDoc", into = "PolytopeDoc")]
pub struct Polytope {
    constraints: Vec<Vec<f64>>,
    bound: f64,
}

#[derive(Serialize, Deserialize)]
struct PolytopeDoc {
    constraints: Vec<Vec<f64>>,
}

impl TryFrom<PolytopeDoc> for Polytope {
    type Error = Error;
    fn try_from(d: PolytopeDoc) -> Result<Self> {
        Polytope::new(d.constraints)
    }
}

impl From<Polytope> for PolytopeDoc {
    fn from(p: Polytope) -> Self {
        PolytopeDoc { constraints: p.constraints }
    }
}

impl Polytope {
    pub fn new(constraints: Vec<Vec<f64>>) -> Result<Self> {
        let m = constraints.first().map(Vec::len).ok_or_else(|| {
            Error::InvalidParameter("polytope needs at least one constraint".into())
        })?;
        if m == 0 {
            return Err(Error::InvalidParameter("constraint vectors must be non-empty".into()));
        }
        for k in &constraints {
            check_dim(m, k.len())?;
            if norm_sq(k) == 0.0 || k.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("constraint vectors must be finite and non-zero".into()));
            }
        }
        let bound = constraints.iter().map(|k| norm(k)).fold(0.0, f64::max);
        Ok(Polytope { constraints, bound })
    }

    /// `s` constraints in `R^m`, each uniform on the sphere of radius `k_bound`.
    pub fn random(s: usize, m: usize, k_bound: f64, seed: u64) -> Result<Self> {
        if s == 0 || m == 0 || !(k_bound > 0.0) {
            return Err(Error::InvalidParameter("random polytope needs s, m >= 1 and k_bound > 0".into()));
        }
        let mut rng = seed::stream(seed, &[0x9017]);
        let ks = (0..s)
            .map(|_| random_unit_vector(m, &mut rng).into_iter().map(|v| v * k_bound).collect())
            .collect();
        Polytope::new(ks)
    }

    pub fn constraints(&self) -> &[Vec<f64>] {
        &self.constraints
    }

    pub fn dim(&self) -> usize {
        self.constraints[0].len()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// `K_I = max_q ‖k_q‖`
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Largest violation `max_q [k_qᵀx]_+`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|k| hinge(dot(k, x))).fold(0.0, f64::max)
    }

    /// `Σ_q [k_qᵀx]_+`
    pub fn total_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|k| hinge(dot(k, x))).sum()
    }
}

fn project_halfspace(k: &[f64], x: &mut [f64]) {
    let a = dot(k, x);
    if a > 0.0 {
        let s = a / norm_sq(k);
        x.iter_mut().zip(k).for_each(|(xi, ki)| *xi -= s * ki);
    }
}

/// Dykstra's alternating projections over the half-spaces of `p` and,
/// if given, the ball of radius `ball`.
fn dykstra(x: &[f64], p: &Polytope, ball: Option<f64>, max_iter: usize, tol: f64) -> Result<Vec<f64>> {
    check_dim(p.dim(), x.len())?;
    let feasible = |y: &[f64]| p.max_violation(y) == 0.0 && ball.map_or(true, |r| norm(y) <= r);
    if feasible(x) {
        return Ok(x.to_vec());
    }
    let m = x.len();
    let sets = p.len() + usize::from(ball.is_some());
    let mut incr = vec![vec![0.0; m]; sets];
    let mut cur = x.to_vec();
    let mut y = vec![0.0; m];
    for _ in 0..max_iter {
        let mut moved = 0.0;
        for (q, inc) in incr.iter_mut().enumerate() {
            for k in 0..m {
                y[k] = cur[k] + inc[k];
            }
            match p.constraints.get(q) {
                Some(kq) => project_halfspace(kq, &mut y),
                None => project_ball_in_place(&mut y, ball.expect("extra set is the ball")),
            }
            for k in 0..m {
                inc[k] = cur[k] + inc[k] - y[k];
                moved += (y[k] - cur[k]).powi(2);
            }
            cur.copy_from_slice(&y);
        }
        let slack = ball.map_or(0.0, |r| (norm(&cur) - r).max(0.0));
        if moved.sqrt() <= tol && p.max_violation(&cur) <= tol && slack <= tol {
            return Ok(cur);
        }
    }
    Err(Error::NoConvergence { what: "Dykstra projection", iterations: max_iter })
}

/// Projection onto the cone `p` by Dykstra's method.
pub fn project_polytope_dykstra(x: &[f64], p: &Polytope, max_iter: usize, tol: f64) -> Result<Vec<f64>> {
    dykstra(x, p, None, max_iter, tol)
}

impl DecisionSet for Polytope {
    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        project_polytope_dykstra(x, self, DYKSTRA_MAX_ITER, DYKSTRA_TOL)
    }

    fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    /// A cone is invariant under scaling, so `(1 − ξ)K = K`.
    fn shrink(&self, xi: f64) -> Result<Box<dyn DecisionSet>> {
        check_xi(xi)?;
        Ok(Box::new(self.clone()))
    }
}

/// `K ∩ B_R`: the feasible region of the constrained problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedPolytope {
    pub polytope: Polytope,
    pub radius: f64,
}

impl BoundedPolytope {
    pub fn new(polytope: Polytope, radius: f64) -> Result<Self> {
        Ball::new(radius)?;
        Ok(BoundedPolytope { polytope, radius })
    }
}

impl DecisionSet for BoundedPolytope {
    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        dykstra(x, &self.polytope, Some(self.radius), DYKSTRA_MAX_ITER, DYKSTRA_TOL)
    }

    fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.polytope.max_violation(x) <= tol && norm(x) <= self.radius + tol
    }

    fn shrink(&self, xi: f64) -> Result<Box<dyn DecisionSet>> {
        check_xi(xi)?;
        Ok(Box::new(BoundedPolytope { polytope: self.polytope.clone(), radius: (1.0 - xi) * self.radius }))
    }
}

/// Distance from `point` to `{y : h_i(t)ᵀy = z_i(t) for all i, t}`.
///
/// The minimum-norm correction `δ` with `Aδ = b − A·point` is
/// `(AᵀA)⁺Aᵀ(b − A·point)`, accumulated sample by sample so the cost is
/// independent of the stream length. Fails if the stacked system has no
/// solution.
pub fn affine_solution_set_distance(data: &DataTensor, point: &[f64]) -> Result<f64> {
    let m = data.m();
    check_dim(m, point.len())?;
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut b_sq = 0.0;
    for p in data.points() {
        let r = -p.residual(point);
        b_sq += p.z * p.z;
        for a in 0..m {
            rhs[a] += p.h[a] * r;
            for c in 0..m {
                gram[(a, c)] += p.h[a] * p.h[c];
            }
        }
    }
    let delta = pinv(&gram) * rhs;
    let delta = delta.as_slice();
    let shifted: Vec<f64> = point.iter().zip(delta).map(|(x, d)| x + d).collect();
    let worst = data.max_residual(&shifted);
    let scale = 1.0f64.max(b_sq.sqrt()).max(data.max_residual(point));
    if worst > 1e-8 * scale {
        return Err(Error::InconsistentSystem { residual: worst });
    }
    Ok(norm(delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_exact, gen_oblivious, DataMeta, DataMode, Sample};
    use crate::linalg::dist;
    use crate::loss::random_ball_vector;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ball_examples() {
        assert_eq!(project_ball(&[3.0, 4.0], 1.0), vec![0.6, 0.8]);
        assert_eq!(project_ball(&[0.1, 0.2], 1.0), vec![0.1, 0.2]);
        let once = project_ball(&[3.0, 4.0], 1.0);
        assert_eq!(project_ball(&once, 1.0), once);
        assert!(Ball::new(0.0).is_err());
    }

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink_ball(2.0, 0.0).unwrap().radius(), 2.0);
        assert_eq!(shrink_ball(2.0, 0.25).unwrap().radius(), 1.5);
        assert!(shrink_ball(2.0, 1.0).is_err());
        assert!(shrink_ball(2.0, -0.1).is_err());
    }

    #[test]
    fn shrunk_ball_keeps_exploration_inside() {
        let mut rng = seed::stream(8, &[]);
        let (r, xi) = (2.0, 0.1);
        let eps = xi * r;
        let inner = shrink_ball(r, xi).unwrap();
        for _ in 0..500 {
            let x = inner.project(&random_ball_vector(3, &mut rng).iter().map(|v| v * 4.0).collect::<Vec<_>>()).unwrap();
            let u = random_unit_vector(3, &mut rng);
            for s in [eps, -eps] {
                let q: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + s * b).collect();
                assert!(norm(&q) <= r + 1e-12);
            }
        }
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge(-1.0), 0.0);
        assert_eq!(hinge(2.5), 2.5);
        assert_eq!(hinge_subgrad(&[1.0, 0.0], &[2.0, 5.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(hinge_subgrad(&[1.0, 0.0], &[-2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(hinge_subgrad(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert!(hinge_subgrad(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn hinge_subgradient_inequality() {
        let mut rng = seed::stream(9, &[]);
        for _ in 0..1000 {
            let k = random_ball_vector(4, &mut rng);
            let x = random_ball_vector(4, &mut rng);
            let y = random_ball_vector(4, &mut rng);
            let g = hinge_subgrad(&k, &x).unwrap();
            let diff: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            assert!(hinge(dot(&k, &y)) >= hinge(dot(&k, &x)) + dot(&g, &diff) - 1e-15);
        }
    }

    #[test]
    fn dykstra_examples() {
        let one = Polytope::new(vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(project_polytope_dykstra(&[-1.0, 3.0], &one, 100, 1e-12).unwrap(), vec![-1.0, 3.0]);
        assert_eq!(project_polytope_dykstra(&[2.0, 3.0], &one, 100, 1e-12).unwrap(), vec![0.0, 3.0]);
        let two = Polytope::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = project_polytope_dykstra(&[2.0, 3.0], &two, 100, 1e-12).unwrap();
        assert_abs_diff_eq!(p[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dykstra_beats_sampled_feasible_points() {
        let mut rng = seed::stream(10, &[]);
        let poly = Polytope::random(4, 3, 1.0, 11).unwrap();
        let set = BoundedPolytope::new(poly.clone(), 1.5).unwrap();
        let tol = 1e-9;
        for _ in 0..100 {
            let x: Vec<f64> = random_ball_vector(3, &mut rng).iter().map(|v| v * 5.0).collect();
            let p = set.project(&x).unwrap();
            assert!(set.contains(&p, tol));
            let pk = poly.project(&x).unwrap();
            assert!(poly.contains(&pk, tol));
            for _ in 0..50 {
                let y: Vec<f64> = random_ball_vector(3, &mut rng).iter().map(|v| v * 1.5).collect();
                if set.contains(&y, 0.0) {
                    assert!(dist(&p, &x) <= dist(&y, &x) + tol);
                }
                if poly.contains(&y, 0.0) {
                    assert!(dist(&pk, &x) <= dist(&y, &x) + tol);
                }
            }
        }
    }

    #[test]
    fn projections_are_idempotent_and_nonexpansive() {
        let mut rng = seed::stream(12, &[]);
        let sets: Vec<Box<dyn DecisionSet>> = vec![
            Box::new(Ball::new(1.3).unwrap()),
            Box::new(Polytope::random(3, 3, 2.0, 1).unwrap()),
            Box::new(BoundedPolytope::new(Polytope::random(5, 3, 1.0, 2).unwrap(), 0.8).unwrap()),
        ];
        for set in &sets {
            for _ in 0..200 {
                let x: Vec<f64> = random_ball_vector(3, &mut rng).iter().map(|v| v * 4.0).collect();
                let y: Vec<f64> = random_ball_vector(3, &mut rng).iter().map(|v| v * 4.0).collect();
                let (px, py) = (set.project(&x).unwrap(), set.project(&y).unwrap());
                assert!(dist(&px, &py) <= dist(&x, &y) + 1e-9);
                let ppx = set.project(&px).unwrap();
                assert!(dist(&ppx, &px) <= 1e-12);
            }
        }
    }

    #[test]
    fn ball_output_within_radius() {
        let mut rng = seed::stream(13, &[]);
        for _ in 0..1000 {
            let x: Vec<f64> = random_ball_vector(5, &mut rng).iter().map(|v| v * 1e3).collect();
            assert!(norm(&project_ball(&x, 0.7)) <= 0.7 + 1e-12);
        }
    }

    #[test]
    fn polytope_json() {
        let p: Polytope = serde_json::from_str(r#"{"constraints": [[3.0, 4.0], [1.0, 0.0]]}"#).unwrap();
        assert_eq!(p.bound(), 5.0);
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"constraints":[[3.0,4.0],[1.0,0.0]]}"#);
        assert!(serde_json::from_str::<Polytope>(r#"{"constraints": [[1.0], [1.0, 2.0]]}"#).is_err());
        assert!(serde_json::from_str::<Polytope>(r#"{"constraints": []}"#).is_err());
    }

    #[test]
    fn polytope_shrink_is_identity() {
        let p = Polytope::random(2, 2, 1.0, 3).unwrap();
        let s = p.shrink(0.3).unwrap();
        assert_eq!(s.project(&[1.0, 1.0]).unwrap(), p.project(&[1.0, 1.0]).unwrap());
        assert!(p.shrink(1.0).is_err());
    }

    fn single_constraint_tensor() -> DataTensor {
        let meta = DataMeta {
            n: 1,
            m: 2,
            horizon: 1,
            mode: DataMode::Exact,
            seed: 0,
            alpha_h: 1.0,
            alpha_z: 1.0,
            y_star: None,
            sigma_noise: 0.0,
        };
        DataTensor::from_rounds(meta, &[vec![Sample::new(vec![1.0, 0.0], 1.0)]]).unwrap()
    }

    #[test]
    fn affine_distance_examples() {
        let d = single_constraint_tensor();
        assert_abs_diff_eq!(affine_solution_set_distance(&d, &[3.0, 0.0]).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(affine_solution_set_distance(&d, &[1.0, 7.0]).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn affine_distance_full_rank_is_distance_to_solution() {
        let ys = [0.3, -1.0, 2.0];
        let d = gen_exact(4, 3, 10, 1.0, &ys, 21).unwrap();
        let point = [1.0, 1.0, 1.0];
        // square solve on the first full-rank round
        let rows = d.round_matrix(0);
        let a = DMatrix::from_fn(3, 3, |r, c| rows[r][c]);
        let b = DVector::from_fn(3, |r, _| d.z(0, r));
        let direct = a.lu().solve(&b).unwrap();
        assert_abs_diff_eq!(direct.as_slice()[0], ys[0], epsilon = 1e-9);
        let expect = dist(&point, direct.as_slice());
        assert_abs_diff_eq!(affine_solution_set_distance(&d, &point).unwrap(), expect, epsilon = 1e-9);
    }

    #[test]
    fn affine_distance_rejects_inconsistent_data() {
        let d = gen_oblivious(4, 2, 20, 1.0, 5.0, 0.5, 3).unwrap();
        assert!(matches!(affine_solution_set_distance(&d, &[0.0, 0.0]), Err(Error::InconsistentSystem { .. })));
    }
}
