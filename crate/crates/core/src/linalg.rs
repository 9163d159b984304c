//! Small dense helpers on `&[f64]` plus the few matrix routines the crate
//! needs (pseudo-inverse, rank, symmetric extremal eigenvalues).

use nalgebra::DMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Arithmetic mean of equal-length vectors.
pub fn mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let m = vectors.first().map_or(0, Vec::len);
    let mut out = vec![0.0; m];
    for v in vectors {
        axpy(1.0, v, &mut out);
    }
    scale(1.0 / vectors.len().max(1) as f64, &mut out);
    out
}

/// Relative cut-off for treating a singular value as zero.
pub const PINV_RTOL: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse; singular values below
/// `PINV_RTOL * sigma_max` are dropped.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = PINV_RTOL * smax;
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Numerical rank via Gaussian elimination with partial pivoting.
pub fn rank(rows: &[Vec<f64>], tol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let nrows = a.len();
    let ncols = a.first().map_or(0, Vec::len);
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |acc, x| acc.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let mut rank = 0;
    for col in 0..ncols {
        if rank == nrows {
            break;
        }
        let pivot = (rank..nrows)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() <= tol * scale {
            continue;
        }
        a.swap(rank, pivot);
        for i in rank + 1..nrows {
            let f = a[i][col] / a[rank][col];
            for k in col..ncols {
                a[i][k] -= f * a[rank][k];
            }
        }
        rank += 1;
    }
    rank
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix.
pub fn lambda_max_sym(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone().symmetric_eigenvalues().max()
}
