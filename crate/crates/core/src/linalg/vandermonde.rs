//! Carathéodory-Vandermonde decomposition of a low-rank PSD Toeplitz matrix:
//! `Toep(u) = sum_k w_k a(f_k) a(f_k)^*` with `w_k > 0`.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eig, nnls, polynomial_roots, toeplitz_build, HermitianMatrix, ToeplitzGenerator,
};
use crate::matrix::{ComplexMatrix, C64};
use crate::model::FrequencySet;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct VandermondeDecomposition {
    pub freqs: FrequencySet,
    /// Positive weights aligned with `freqs`.
    pub weights: Vec<f64>,
    /// `||Toep(u) - sum_k w_k a a^*||_F / ||Toep(u)||_F`.
    pub relative_residual: f64,
}

/// Recovers frequencies and weights from a PSD Toeplitz generator.
///
/// The numerical rank `r` counts eigenvalues above `rank_tol * λ_max`. The
/// frequencies are the unit-circle roots of the order-`r` prediction polynomial
/// that annihilates every length-`r+1` window of the signal subspace; weights
/// come from nonnegative least squares on the generator equations.
pub fn vandermonde_decompose(
    g: &ToeplitzGenerator,
    rank_tol: f64,
) -> Result<VandermondeDecomposition> {
    let n = g.n();
    let t = toeplitz_build(g);
    let eig = hermitian_eig(&t)?;
    let lam_max = eig.values.last().copied().unwrap_or(0.0);
    let lam_min = eig.values.first().copied().unwrap_or(0.0);
    if lam_max <= 0.0 {
        if lam_min < 0.0 {
            return Err(Error::NotPsd {
                min_eig: lam_min,
                max_eig: lam_max,
            });
        }
        return Ok(VandermondeDecomposition {
            freqs: FrequencySet::empty(),
            weights: Vec::new(),
            relative_residual: 0.0,
        });
    }
    if lam_min < -rank_tol.max(1e-12) * lam_max {
        return Err(Error::NotPsd {
            min_eig: lam_min,
            max_eig: lam_max,
        });
    }
    let rank = eig
        .values
        .iter()
        .filter(|&&v| v > rank_tol * lam_max)
        .count();
    if rank >= n {
        return Err(Error::FullRank { rank, n });
    }

    // Signal subspace: eigenvectors of the `rank` largest eigenvalues.
    let signal: Vec<Vec<C64>> = (n - rank..n).map(|k| eig.vectors.column(k)).collect();
    let predictor = annihilating_filter(&signal, n, rank)?;
    let roots = polynomial_roots(&predictor)?;
    if roots.len() != rank {
        return Err(Error::IllConditioned(format!(
            "prediction polynomial has degree {} for rank {rank}",
            roots.len()
        )));
    }
    let mut freqs: Vec<f64> = roots
        .iter()
        .map(|z| (z.arg() / TAU).rem_euclid(1.0))
        .map(|f| if f >= 1.0 { 0.0 } else { f })
        .collect();
    freqs.sort_by(f64::total_cmp);
    if freqs.windows(2).any(|w| w[1] - w[0] < 1e-12) {
        return Err(Error::IllConditioned(
            "coincident roots in Vandermonde rooting".into(),
        ));
    }

    let weights = fit_weights(g, &freqs)?;
    let rebuilt = toeplitz_build(&ToeplitzGenerator::from_spectrum(&freqs, &weights, n)?);
    let relative_residual =
        rebuilt.as_matrix().sub(t.as_matrix())?.frobenius_norm() / t.as_matrix().frobenius_norm();

    // Drop components the fit switched off.
    let (freqs, weights): (Vec<f64>, Vec<f64>) = freqs
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0.0)
        .unzip();
    Ok(VandermondeDecomposition {
        freqs: FrequencySet::new(freqs)?,
        weights,
        relative_residual,
    })
}

/// Coefficients `h_0..h_r` with `sum_t h_t x[i+t] = 0` for every window of
/// every subspace basis vector; the smallest right singular vector of the
/// stacked window matrix.
fn annihilating_filter(basis: &[Vec<C64>], n: usize, r: usize) -> Result<Vec<C64>> {
    let width = r + 1;
    let mut gram = ComplexMatrix::zeros(width, width);
    for v in basis {
        for i in 0..n - r {
            let w = &v[i..i + width];
            for p in 0..width {
                let wp = w[p].conj();
                for q in 0..width {
                    gram[(p, q)] += wp * w[q];
                }
            }
        }
    }
    let eig = hermitian_eig(&HermitianMatrix::from_raw(gram))?;
    Ok(eig.vectors.column(0))
}

fn fit_weights(g: &ToeplitzGenerator, freqs: &[f64]) -> Result<Vec<f64>> {
    let n = g.n();
    let r = freqs.len();
    // Rows: real then imaginary parts of u[t] = sum_k (w_k / n) e^{i 2π f_k t}.
    let mut a = vec![0.0; 2 * n * r];
    let mut b = vec![0.0; 2 * n];
    for t in 0..n {
        for (k, &f) in freqs.iter().enumerate() {
            let z = C64::from_polar(1.0 / n as f64, TAU * (f * t as f64).rem_euclid(1.0));
            a[t * r + k] = z.re;
            a[(n + t) * r + k] = z.im;
        }
        b[t] = g.as_slice()[t].re;
        b[n + t] = g.as_slice()[t].im;
    }
    nnls(&a, 2 * n, r, &b)
}
