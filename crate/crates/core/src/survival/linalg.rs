//! Dense symmetric positive definite solves for the handful of small
//! matrices this crate needs (log-rank covariance, Cox information). Row
//! major, dimension rarely above a dozen, so plain Cholesky is plenty.

/// Lower Cholesky factor of a symmetric positive definite matrix, or `None`
/// when a pivot is not meaningfully positive (singular or indefinite).
pub(crate) fn cholesky(a: &[f64], p: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), p * p);
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                // Pivot tolerance is relative to the diagonal scale so a
                // matrix of tiny but well conditioned entries still factors.
                let scale = a[i * p + i].abs().max(1.0);
                if !(sum > scale * 1e-12) {
                    return None;
                }
                l[i * p + i] = sum.sqrt();
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    Some(l)
}

/// Solve L L' x = b given the lower factor.
pub(crate) fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(b.len(), p);
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * p + k] * y[k];
        }
        y[i] = sum / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut sum = y[i];
        for k in i + 1..p {
            sum -= l[k * p + i] * x[k];
        }
        x[i] = sum / l[i * p + i];
    }
    x
}

/// Inverse of a symmetric positive definite matrix, or `None` when singular.
pub(crate) fn spd_inverse(a: &[f64], p: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, p)?;
    let mut inv = vec![0.0; p * p];
    let mut e = vec![0.0; p];
    for j in 0..p {
        e.fill(0.0);
        e[j] = 1.0;
        let col = cholesky_solve(&l, p, &e);
        for i in 0..p {
            inv[i * p + j] = col[i];
        }
    }
    Some(inv)
}
