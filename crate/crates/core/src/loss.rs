//! The square loss `½(hᵀy − z)²`, its gradient, and the two-point bandit
//! gradient estimator.
//!
//! [`smoothed_loss_mc`] is a Monte-Carlo estimate of the ball-smoothed loss
//! `E_v[loss(y + εv)]`. No algorithm evaluates it; it exists so the
//! estimator's conditional mean can be checked against something
//! independent.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm};
use crate::seed;

/// One sample `(h, z)` viewed as a loss function of `y`.
#[derive(Debug, Clone, Copy)]
pub struct LossPoint<'a> {
    pub h: &'a [f64],
    pub z: f64,
}

impl<'a> LossPoint<'a> {
    pub fn new(h: &'a [f64], z: f64) -> Self {
        LossPoint { h, z }
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    /// `hᵀy − z`
    pub fn residual(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.h.len());
        dot(self.h, y) - self.z
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let r = self.residual(y);
        0.5 * r * r
    }

    /// Writes `h(hᵀy − z)` into `out`.
    pub fn gradient_into(&self, y: &[f64], out: &mut [f64]) {
        let r = self.residual(y);
        for (o, h) in out.iter_mut().zip(self.h) {
            *o = h * r;
        }
    }

    /// Loss at `y + s·u`, without allocating.
    fn value_along(&self, y: &[f64], u: &[f64], s: f64) -> f64 {
        let r: f64 = self.h.iter().zip(y).zip(u).map(|((h, y), u)| h * (y + s * u)).sum::<f64>() - self.z;
        0.5 * r * r
    }
}

pub fn loss(p: &LossPoint<'_>, y: &[f64]) -> Result<f64> {
    check_dim(p.dim(), y.len())?;
    Ok(p.value(y))
}

pub fn grad(p: &LossPoint<'_>, y: &[f64]) -> Result<Vec<f64>> {
    check_dim(p.dim(), y.len())?;
    let mut g = vec![0.0; y.len()];
    p.gradient_into(y, &mut g);
    Ok(g)
}

/// Uniform direction on the unit sphere: a normalised Gaussian vector.
pub fn random_unit_vector<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut u: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&u);
        if n > 0.0 && n.is_finite() {
            u.iter_mut().for_each(|x| *x /= n);
            return u;
        }
    }
}

/// Uniform point in the closed unit ball.
pub fn random_ball_vector<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    let mut v = random_unit_vector(m, rng);
    let radius = rng.random::<f64>().powf(1.0 / m as f64);
    v.iter_mut().for_each(|x| *x *= radius);
    v
}

/// `(m / 2ε) (loss(y + εu) − loss(y − εu)) u`, two loss queries.
pub fn two_point_estimate(p: &LossPoint<'_>, y: &[f64], u: &[f64], eps: f64, m: usize) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("exploration radius must be positive, got {eps}")));
    }
    check_dim(p.dim(), y.len())?;
    check_dim(p.dim(), u.len())?;
    let mut g = vec![0.0; y.len()];
    two_point_estimate_into(p, y, u, eps, m, &mut g);
    Ok(g)
}

pub(crate) fn two_point_estimate_into(p: &LossPoint<'_>, y: &[f64], u: &[f64], eps: f64, m: usize, out: &mut [f64]) {
    let plus = p.value_along(y, u, eps);
    let minus = p.value_along(y, u, -eps);
    let coef = m as f64 / (2.0 * eps) * (plus - minus);
    for (o, ui) in out.iter_mut().zip(u) {
        *o = coef * ui;
    }
}

/// Monte-Carlo mean of `loss(y + eps·v)` over `num_samples` uniform-ball
/// draws `v` from the stream `seed`. Test oracle only.
pub fn smoothed_loss_mc(p: &LossPoint<'_>, y: &[f64], eps: f64, num_samples: usize, seed: u64) -> f64 {
    if eps == 0.0 {
        return p.value(y);
    }
    let mut rng = seed::stream(seed, &[]);
    let m = y.len();
    let mut acc = 0.0;
    for _ in 0..num_samples.max(1) {
        let v = random_ball_vector(m, &mut rng);
        acc += p.value_along(y, &v, eps);
    }
    acc / num_samples.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn loss_examples() {
        let p = LossPoint::new(&[1.0, 0.0], 0.0);
        assert_eq!(loss(&p, &[2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(grad(&p, &[2.0, 3.0]).unwrap(), vec![2.0, 0.0]);
        let q = LossPoint::new(&[1.0, 1.0], 1.0);
        assert_eq!(loss(&q, &[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(loss(&q, &[0.25, 0.75]).unwrap(), 0.0);
        assert_eq!(grad(&q, &[0.25, 0.75]).unwrap(), vec![0.0, 0.0]);
        assert!(loss(&q, &[1.0]).is_err());
        assert!(grad(&q, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn unit_vectors() {
        let mut rng = seed::stream(1, &[]);
        for _ in 0..100 {
            let u = random_unit_vector(1, &mut rng);
            assert!(u[0] == 1.0 || u[0] == -1.0);
        }
        for m in 1..8 {
            for _ in 0..50 {
                assert!((norm(&random_unit_vector(m, &mut rng)) - 1.0).abs() <= 1e-12);
                assert!(norm(&random_ball_vector(m, &mut rng)) <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn unit_vector_mean_is_near_zero() {
        let mut rng = seed::stream(2, &[]);
        let n = 100_000;
        let m = 3;
        let mut acc = vec![0.0; m];
        for _ in 0..n {
            crate::linalg::axpy(1.0, &random_unit_vector(m, &mut rng), &mut acc);
        }
        for a in acc {
            assert!((a / n as f64).abs() <= 3.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn two_point_is_exact_for_one_dimensional_quadratic() {
        let p = LossPoint::new(&[1.0], 0.0);
        let g = two_point_estimate(&p, &[1.0], &[1.0], 0.1, 1).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-12);
        assert!(two_point_estimate(&p, &[1.0], &[1.0], 0.0, 1).is_err());
        assert!(two_point_estimate(&p, &[1.0], &[1.0], -0.5, 1).is_err());
    }

    #[test]
    fn two_point_at_minimum_is_bounded_by_exploration() {
        let mut rng = seed::stream(3, &[]);
        let h = [0.6, -0.3, 0.2];
        let ystar = [1.0, 2.0, -1.0];
        let z = dot(&h, &ystar);
        let p = LossPoint::new(&h, z);
        for _ in 0..200 {
            let u = random_unit_vector(3, &mut rng);
            let g = two_point_estimate(&p, &ystar, &u, 0.05, 3).unwrap();
            assert!(norm(&g) <= 3.0 * crate::linalg::norm_sq(&h) * 0.05 + 1e-15);
        }
    }

    #[test]
    fn smoothed_loss_with_zero_radius_is_loss() {
        let p = LossPoint::new(&[0.3, 0.4], 1.5);
        assert_eq!(smoothed_loss_mc(&p, &[1.0, -2.0], 0.0, 10, 9), p.value(&[1.0, -2.0]));
    }

    #[test]
    fn two_point_reduces_to_projected_gradient_on_quadratics() {
        // for a quadratic the odd terms cancel: g = m (uᵀ∇θ) u
        let mut rng = seed::stream(4, &[]);
        for _ in 0..100 {
            let h = random_ball_vector(4, &mut rng);
            let y = random_ball_vector(4, &mut rng);
            let p = LossPoint::new(&h, 0.7);
            let u = random_unit_vector(4, &mut rng);
            let g = two_point_estimate(&p, &y, &u, 0.2, 4).unwrap();
            let gr = grad(&p, &y).unwrap();
            let c = 4.0 * dot(&u, &gr);
            for k in 0..4 {
                assert_abs_diff_eq!(g[k], c * u[k], epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn loss_nonnegative_and_self_bounded(
            h in prop::collection::vec(-2.0f64..2.0, 3),
            y in prop::collection::vec(-5.0f64..5.0, 3),
            z in -5.0f64..5.0,
        ) {
            let p = LossPoint::new(&h, z);
            let l = p.value(&y);
            prop_assert!(l >= 0.0);
            let g = grad(&p, &y).unwrap();
            let lhs = crate::linalg::norm_sq(&g);
            let rhs = 2.0 * crate::linalg::norm_sq(&h) * l;
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn gradient_matches_central_differences(
            h in prop::collection::vec(-2.0f64..2.0, 3),
            y in prop::collection::vec(-5.0f64..5.0, 3),
            z in -5.0f64..5.0,
        ) {
            let p = LossPoint::new(&h, z);
            let g = grad(&p, &y).unwrap();
            let step = 1e-5;
            for k in 0..3 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[k] += step;
                ym[k] -= step;
                let fd = (p.value(&yp) - p.value(&ym)) / (2.0 * step);
                prop_assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0));
            }
        }
    }
}
