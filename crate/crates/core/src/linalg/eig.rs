//! Hermitian eigendecomposition through the real symmetric embedding
//! `[[Re H, -Im H], [Im H, Re H]]`, and projection onto the PSD cone.

use crate::error::Result;
use crate::linalg::jacobi::{self, SymmetricEigen, DEFAULT_MAX_SWEEPS};
use crate::linalg::HermitianMatrix;
use crate::matrix::{ComplexMatrix, C64};

/// Relative width below which embedding eigenvalues are treated as one cluster.
const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `V diag(f(λ)) V^*`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.vectors.rows();
        let mut out = ComplexMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            for i in 0..n {
                let vi = v[i] * w;
                for j in 0..n {
                    out[(i, j)] += vi * v[j].conj();
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reconstruct_with(|x| x)
    }
}

pub(crate) fn embed(h: &ComplexMatrix) -> Vec<f64> {
    let n = h.rows();
    let m = 2 * n;
    let mut e = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            e[i * m + j] = z.re;
            e[(i + n) * m + j + n] = z.re;
            e[i * m + j + n] = -z.im;
            e[(i + n) * m + j] = z.im;
        }
    }
    e
}

/// Full spectral decomposition of a Hermitian matrix.
pub fn hermitian_eig(h: &HermitianMatrix) -> Result<EigenDecomposition> {
    hermitian_eig_with_sweeps(h, DEFAULT_MAX_SWEEPS)
}

pub fn hermitian_eig_with_sweeps(
    h: &HermitianMatrix,
    max_sweeps: usize,
) -> Result<EigenDecomposition> {
    let n = h.dim();
    let sym = jacobi::symmetric_eigen(embed(h.as_matrix()), 2 * n, max_sweeps)?;
    Ok(pair_embedding(h.as_matrix(), &sym))
}

/// Maps the doubled spectrum of the embedding back to `n` complex eigenpairs.
///
/// Every eigenvector `[p; q]` of the embedding yields the complex eigenvector
/// `p + i q`; each complex direction appears twice, so clusters of equal
/// eigenvalues are reduced with pivoted Gram-Schmidt.
fn pair_embedding(h: &ComplexMatrix, sym: &SymmetricEigen) -> EigenDecomposition {
    let n = h.rows();
    let m = 2 * n;
    let spread = sym.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let width = if spread > 0.0 {
        CLUSTER_TOL * spread
    } else {
        f64::MIN_POSITIVE
    };

    let mut accepted: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        loop {
            while end < m && sym.values[end] - sym.values[end - 1] <= width {
                end += 1;
            }
            if (end - start) % 2 == 0 || end == m {
                break;
            }
            end += 1;
        }
        let want = (end - start + 1) / 2;
        let mut cands: Vec<Vec<C64>> = (start..end)
            .map(|k| {
                let v = &sym.vectors_t[k * m..(k + 1) * m];
                (0..n).map(|i| C64::new(v[i], v[i + n])).collect()
            })
            .collect();
        for _ in 0..want.min(n - accepted.len()) {
            let (best, norm) = cands
                .iter()
                .enumerate()
                .map(|(i, c)| (i, crate::matrix::vec_norm(c)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty cluster");
            let mut v = cands.swap_remove(best);
            v.iter_mut().for_each(|z| *z /= norm);
            for c in cands.iter_mut() {
                let proj = crate::matrix::vec_dot(&v, c);
                for (ci, vi) in c.iter_mut().zip(&v) {
                    *ci -= proj * vi;
                }
            }
            accepted.push(v);
        }
        start = end;
    }

    let mut pairs: Vec<(f64, Vec<C64>)> = accepted
        .into_iter()
        .map(|v| {
            let hv = h.mul_vec(&v).expect("square");
            (crate::matrix::vec_dot(&v, &hv).re, v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values = pairs.iter().map(|p| p.0).collect();
    let cols: Vec<Vec<C64>> = pairs.into_iter().map(|p| p.1).collect();
    EigenDecomposition {
        values,
        vectors: ComplexMatrix::from_columns(&cols).expect("equal lengths"),
    }
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
pub fn psd_project(h: &HermitianMatrix) -> Result<HermitianMatrix> {
    let n = h.dim();
    let sym = jacobi::symmetric_eigen(embed(h.as_matrix()), 2 * n, DEFAULT_MAX_SWEEPS)?;
    let mut out = ComplexMatrix::zeros(n, n);
    fold_positive_part(&sym.values, &sym.vectors_t, n, &mut out);
    Ok(HermitianMatrix::from_raw(out))
}

/// Writes the complex matrix represented by `sum_{λ_k > 0} λ_k v_k v_k^T` of
/// the embedding (dimension `2n`) into `out`.
pub(crate) fn fold_positive_part(
    values: &[f64],
    vectors_t: &[f64],
    n: usize,
    out: &mut ComplexMatrix,
) {
    let m = 2 * n;
    out.as_mut_slice()
        .iter_mut()
        .for_each(|z| *z = C64::new(0.0, 0.0));
    let mut re = vec![0.0; n * n];
    let mut im = vec![0.0; n * n];
    for (k, &lam) in values.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let v = &vectors_t[k * m..(k + 1) * m];
        let (top, bot) = v.split_at(n);
        for i in 0..n {
            let (ti, bi) = (lam * top[i], lam * bot[i]);
            let re_row = &mut re[i * n..(i + 1) * n];
            for ((r, &tj), &bj) in re_row.iter_mut().zip(top).zip(bot) {
                // Average of the two diagonal blocks.
                *r += ti * tj + bi * bj;
            }
            let im_row = &mut im[i * n..(i + 1) * n];
            for ((s, &tj), &bj) in im_row.iter_mut().zip(top).zip(bot) {
                // Average of the lower-left block and minus the upper-right block.
                *s += bi * tj - ti * bj;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = C64::new(0.5 * re[i * n + j], 0.5 * im[i * n + j]);
        }
    }
    for i in 0..n {
        let d = out[(i, i)].re;
        out[(i, i)] = C64::new(d, 0.0);
    }
}
