//! The two-point estimator averages to the gradient of the smoothed loss,
//! and its norm stays under m‖∇θ‖ + m‖h‖²ε.

use netreg::linalg::{dot, norm, norm_sq};
use netreg::loss::{grad, random_unit_vector, smoothed_loss_mc, two_point_estimate, LossPoint};
use netreg::seed;

fn main() -> netreg::Result<()> {
    let h = [0.6, -0.3, 0.5];
    let p = LossPoint::new(&h, 0.4);
    let y = [0.2, 1.1, -0.7];
    let (eps, m, draws) = (0.2, 3, 200_000);
    let mut rng = seed::stream(1, &[]);
    let mut mean = [0.0; 3];
    let mut worst = 0.0_f64;
    let bound = m as f64 * norm(&grad(&p, &y)?) + m as f64 * norm_sq(&h) * eps;
    for _ in 0..draws {
        let u = random_unit_vector(m, &mut rng);
        let g = two_point_estimate(&p, &y, &u, eps, m)?;
        worst = worst.max(norm(&g));
        for (a, b) in mean.iter_mut().zip(&g) {
            *a += b / draws as f64;
        }
    }
    let d = 1e-4;
    let fd: Vec<f64> = (0..m)
        .map(|j| {
            let (mut a, mut b) = (y, y);
            a[j] += d;
            b[j] -= d;
            (smoothed_loss_mc(&p, &a, eps, 100_000, 2) - smoothed_loss_mc(&p, &b, eps, 100_000, 2)) / (2.0 * d)
        })
        .collect();
    println!("estimator mean       {mean:.4?}");
    println!("smoothed-loss grad   {fd:.4?}");
    println!("exact grad           {:.4?}", grad(&p, &y)?);
    println!("largest ||g|| {worst:.4} <= bound {bound:.4}");
    let gap = smoothed_loss_mc(&p, &y, eps, 100_000, 3) - p.value(&y);
    println!("smoothing gap {gap:.5} <= {:.5}", norm(&h) * (dot(&h, &y) - 0.4).abs() * eps + norm_sq(&h) * eps * eps);
    Ok(())
}
