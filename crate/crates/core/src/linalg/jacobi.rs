//! Cyclic Jacobi eigensolver for dense real symmetric matrices.

use crate::error::{Error, Result};

pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Stop once the off-diagonal Frobenius norm is below this fraction of `||A||_F`.
const OFF_TOL: f64 = 1e-15;

/// Diagonalizes the row-major symmetric `a` (`n x n`) in place.
///
/// `vt` holds an orthogonal basis stored by rows; on entry it must satisfy
/// `a = vt * A0 * vt^T` for the original matrix `A0` (the identity for a cold
/// start). On exit the diagonal of `a` holds the eigenvalues and row `k` of `vt`
/// the matching eigenvector. Returns the number of sweeps performed.
pub(crate) fn jacobi_in_place(
    a: &mut [f64],
    vt: &mut [f64],
    n: usize,
    max_sweeps: usize,
) -> Result<usize> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(vt.len(), n * n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 || n < 2 {
        return Ok(0);
    }
    let skip = OFF_TOL * scale / n as f64;
    let mut row_p = vec![0.0; n];
    let mut row_q = vec![0.0; n];

    for sweep in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if (2.0 * off).sqrt() <= OFF_TOL * scale {
            return Ok(sweep);
        }

        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= skip {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // Rows p and q of J^T A.
                for r in 0..n {
                    let xp = a[p * n + r];
                    let xq = a[q * n + r];
                    row_p[r] = c * xp - s * xq;
                    row_q[r] = s * xp + c * xq;
                }
                a[p * n..(p + 1) * n].copy_from_slice(&row_p);
                a[q * n..(q + 1) * n].copy_from_slice(&row_q);
                for r in 0..n {
                    a[r * n + p] = row_p[r];
                    a[r * n + q] = row_q[r];
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                let (head, tail) = vt.split_at_mut(q * n);
                let vp = &mut head[p * n..(p + 1) * n];
                let vq = &mut tail[..n];
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
            }
        }
    }
    Err(Error::NotConverged {
        what: "Jacobi eigensolver",
        iters: max_sweeps,
    })
}

/// Eigenpairs of a real symmetric matrix, ascending.
#[derive(Debug, Clone)]
pub(crate) struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Row `k` is the eigenvector for `values[k]`.
    pub vectors_t: Vec<f64>,
}

pub(crate) fn symmetric_eigen(
    mut a: Vec<f64>,
    n: usize,
    max_sweeps: usize,
) -> Result<SymmetricEigen> {
    let mut vt = identity(n);
    jacobi_in_place(&mut a, &mut vt, n, max_sweeps)?;
    Ok(sorted(&a, vt, n))
}

pub(crate) fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// Sorts a diagonalized matrix's eigenpairs into ascending order.
pub(crate) fn sorted(diag_src: &[f64], vt: Vec<f64>, n: usize) -> SymmetricEigen {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag_src[i * n + i].total_cmp(&diag_src[j * n + j]));
    let values = order.iter().map(|&i| diag_src[i * n + i]).collect();
    let mut vectors_t = Vec::with_capacity(n * n);
    for &i in &order {
        vectors_t.extend_from_slice(&vt[i * n..(i + 1) * n]);
    }
    SymmetricEigen { values, vectors_t }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let e = symmetric_eigen(vec![2.0, 1.0, 1.0, 2.0], 2, 100).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        let n = 9;
        let mut a = vec![0.0; n * n];
        let mut x = 0.37_f64;
        for i in 0..n {
            for j in i..n {
                x = (x * 3.7 + 0.113).fract();
                a[i * n + j] = x - 0.5;
                a[j * n + i] = x - 0.5;
            }
        }
        let e = symmetric_eigen(a.clone(), n, 100).unwrap();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n)
                    .map(|k| e.values[k] * e.vectors_t[k * n + i] * e.vectors_t[k * n + j])
                    .sum();
                assert!((v - a[i * n + j]).abs() < 1e-13);
            }
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sweep_cap_is_reported() {
        let a = vec![1.0, 0.5, 0.0, 0.5, 2.0, 0.3, 0.0, 0.3, 3.0];
        assert!(matches!(
            symmetric_eigen(a, 3, 0),
            Err(Error::NotConverged { .. })
        ));
    }
}
