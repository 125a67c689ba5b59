//! Dense Hermitian linear algebra: Toeplitz operators, eigendecomposition,
//! PSD projection and the Vandermonde decomposition of PSD Toeplitz matrices.

mod eig;
pub(crate) mod jacobi;
mod nnls;
mod roots;
mod tridiag;
mod vandermonde;

pub use eig::{hermitian_eig, hermitian_eig_with_sweeps, psd_project, EigenDecomposition};
pub use nnls::nnls;
pub use roots::polynomial_roots;
pub use tridiag::PsdProjector;
pub use vandermonde::{vandermonde_decompose, VandermondeDecomposition, DEFAULT_RANK_TOL};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::matrix::{ComplexMatrix, C64};

/// Absolute Hermitian-symmetry tolerance, scaled by the largest entry.
const HERMITIAN_TOL: f64 = 1e-12;

/// Square matrix equal to its conjugate transpose, with a real diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    /// Checks symmetry to tolerance, then symmetrizes exactly.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(mismatch(format!(
                "{}x{} matrix is not square",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        let scale = m.as_slice().iter().fold(1.0f64, |a, z| a.max(z.norm()));
        for i in 0..n {
            for j in i..n {
                let d = (m[(i, j)] - m[(j, i)].conj()).norm();
                if d > HERMITIAN_TOL * scale {
                    return Err(invalid(format!(
                        "entries ({i},{j}) and ({j},{i}) are not conjugate (gap {d:e})"
                    )));
                }
            }
        }
        Ok(Self::from_raw(m))
    }

    /// Symmetrizes `(M + M^*)/2` without checking.
    pub(crate) fn from_raw(m: ComplexMatrix) -> Self {
        let n = m.rows();
        let mut out = m;
        for i in 0..n {
            let d = out[(i, i)].re;
            out[(i, i)] = C64::new(d, 0.0);
            for j in i + 1..n {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)].conj());
                out[(i, j)] = avg;
                out[(j, i)] = avg.conj();
            }
        }
        Self(out)
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = ComplexMatrix::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        HermitianMatrix::new(ComplexMatrix::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// First column `u` of a Hermitian Toeplitz matrix; `u[0]` is real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<C64>", into = "Vec<C64>")]
pub struct ToeplitzGenerator(Vec<C64>);

impl ToeplitzGenerator {
    pub fn new(u: Vec<C64>) -> Result<Self> {
        match u.first() {
            None => Err(invalid("Toeplitz generator must be nonempty")),
            Some(z) if z.im != 0.0 => Err(invalid(format!("u[0] = {z} is not real"))),
            Some(_) if u.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) => {
                Err(invalid("non-finite Toeplitz generator entry"))
            }
            Some(_) => Ok(Self(u)),
        }
    }

    /// Generator of `sum_k w_k a(f_k) a(f_k)^*`, i.e. `u[t] = sum_k (w_k/n) e^{i2π f_k t}`.
    pub fn from_spectrum(freqs: &[f64], weights: &[f64], n: usize) -> Result<Self> {
        if freqs.len() != weights.len() {
            return Err(mismatch("one weight per frequency required"));
        }
        let mut u = vec![C64::new(0.0, 0.0); n];
        for (&f, &w) in freqs.iter().zip(weights) {
            for (t, ut) in u.iter_mut().enumerate() {
                *ut += C64::from_polar(
                    w / n as f64,
                    std::f64::consts::TAU * (f * t as f64).rem_euclid(1.0),
                );
            }
        }
        u[0].im = 0.0;
        Self::new(u)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    /// Real inner product matching [`toeplitz_adjoint`]:
    /// `u0 v0 + 2 sum_{k>=1} Re(conj(u_k) v_k)`.
    pub fn paired_inner(&self, other: &Self) -> Result<f64> {
        if self.n() != other.n() {
            return Err(mismatch("generator lengths differ"));
        }
        let mut s = self.0[0].re * other.0[0].re;
        for (a, b) in self.0.iter().zip(&other.0).skip(1) {
            s += 2.0 * (a.conj() * b).re;
        }
        Ok(s)
    }
}

impl TryFrom<Vec<C64>> for ToeplitzGenerator {
    type Error = crate::error::Error;

    fn try_from(v: Vec<C64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ToeplitzGenerator> for Vec<C64> {
    fn from(g: ToeplitzGenerator) -> Self {
        g.0
    }
}

/// `Toep(u)`: entry `(i, j)` is `u[i-j]` below the diagonal and `conj(u[j-i])` above.
pub fn toeplitz_build(g: &ToeplitzGenerator) -> HermitianMatrix {
    let u = g.as_slice();
    let n = u.len();
    HermitianMatrix(ComplexMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            u[i - j]
        } else {
            u[j - i].conj()
        }
    }))
}

/// Subdiagonal sums `u[k] = sum_i M[i+k, i]`, with `u[0]` taken real.
pub fn toeplitz_adjoint(m: &ComplexMatrix) -> Result<ToeplitzGenerator> {
    if m.rows() != m.cols() {
        return Err(mismatch(format!(
            "{}x{} matrix is not square",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if n == 0 {
        return Err(invalid("empty matrix"));
    }
    let mut u: Vec<C64> = (0..n)
        .map(|k| (0..n - k).map(|i| m[(i + k, i)]).sum())
        .collect();
    u[0].im = 0.0;
    ToeplitzGenerator::new(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::atom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> HermitianMatrix {
        let g = ComplexMatrix::from_fn(n, n, |_, _| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        HermitianMatrix::from_raw(g)
    }

    #[test]
    fn toeplitz_build_examples() {
        let id = toeplitz_build(
            &ToeplitzGenerator::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap(),
        );
        assert_eq!(id.as_matrix(), &ComplexMatrix::identity(3));

        let t = toeplitz_build(&ToeplitzGenerator::new(vec![c(2.0, 0.0), c(0.0, 1.0)]).unwrap());
        let want = ComplexMatrix::new(
            2,
            2,
            vec![c(2.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(2.0, 0.0)],
        )
        .unwrap();
        assert_eq!(t.as_matrix(), &want);

        assert!(ToeplitzGenerator::new(vec![c(1.0, 0.5)]).is_err());
    }

    #[test]
    fn toeplitz_matches_outer_product_sum() {
        let n = 7;
        let freqs = [0.12, 0.4, 0.77];
        let weights = [1.5, 0.25, 2.0];
        let mut direct = ComplexMatrix::zeros(n, n);
        for (&f, &w) in freqs.iter().zip(&weights) {
            let a = atom(f, n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    direct[(i, j)] += a[i] * a[j].conj() * w;
                }
            }
        }
        let t = toeplitz_build(&ToeplitzGenerator::from_spectrum(&freqs, &weights, n).unwrap());
        assert!(t.as_matrix().max_abs_diff(&direct).unwrap() < 1e-12);
    }

    #[test]
    fn toeplitz_adjoint_examples() {
        let u = toeplitz_adjoint(&ComplexMatrix::identity(3)).unwrap();
        assert_eq!(u.as_slice(), &[c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);

        let t = toeplitz_build(
            &ToeplitzGenerator::new(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap(),
        );
        let u = toeplitz_adjoint(t.as_matrix()).unwrap();
        assert_eq!(u.as_slice(), &[c(3.0, 0.0), c(0.0, 2.0), c(0.0, 0.0)]);

        assert!(toeplitz_adjoint(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn toeplitz_adjoint_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let n = 5;
            let mut u: Vec<C64> = (0..n)
                .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            u[0].im = 0.0;
            let g = ToeplitzGenerator::new(u).unwrap();
            let m = random_hermitian(n, &mut rng);
            let lhs = toeplitz_build(&g)
                .as_matrix()
                .real_inner(m.as_matrix())
                .unwrap();
            let rhs = g
                .paired_inner(&toeplitz_adjoint(m.as_matrix()).unwrap())
                .unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn hermitian_checks_symmetry() {
        let bad = ComplexMatrix::new(
            2,
            2,
            vec![c(1.0, 0.0), c(1.0, 1.0), c(1.0, 1.0), c(1.0, 0.0)],
        )
        .unwrap();
        assert!(HermitianMatrix::new(bad).is_err());
        assert!(HermitianMatrix::new(ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eig_examples() {
        let e = hermitian_eig(&HermitianMatrix::identity(4)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let vv = e.vectors.adjoint().matmul(&e.vectors).unwrap();
        assert!(vv.max_abs_diff(&ComplexMatrix::identity(4)).unwrap() < 1e-12);

        let h = HermitianMatrix::new(
            ComplexMatrix::new(
                2,
                2,
                vec![c(2.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(2.0, 0.0)],
            )
            .unwrap(),
        )
        .unwrap();
        let e = hermitian_eig(&h).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-13 && (e.values[1] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn eig_random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let h = random_hermitian(8, &mut rng);
            let e = hermitian_eig(&h).unwrap();
            let rel = e.reconstruct().sub(h.as_matrix()).unwrap().frobenius_norm()
                / h.as_matrix().frobenius_norm();
            assert!(rel < 1e-9, "reconstruction {rel}");
            let vv = e.vectors.adjoint().matmul(&e.vectors).unwrap();
            assert!(vv.max_abs_diff(&ComplexMatrix::identity(8)).unwrap() < 1e-10);
            let sum: f64 = e.values.iter().sum();
            assert!((sum - h.trace()).abs() < 1e-9 * h.as_matrix().frobenius_norm());
            let sq: f64 = e.values.iter().map(|v| v * v).sum();
            assert!((sq - h.as_matrix().frobenius_norm_sqr()).abs() < 1e-9 * sq);
        }
    }

    #[test]
    fn eig_degenerate_spectrum() {
        // Two repeated eigenvalues with a nontrivial eigenbasis.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = hermitian_eig(&random_hermitian(5, &mut rng))
            .unwrap()
            .vectors;
        let d = HermitianMatrix::diagonal(&[1.0, 1.0, 1.0, -2.0, -2.0]);
        let h = HermitianMatrix::from_raw(
            q.matmul(d.as_matrix())
                .unwrap()
                .matmul(&q.adjoint())
                .unwrap(),
        );
        let e = hermitian_eig(&h).unwrap();
        let rel = e.reconstruct().sub(h.as_matrix()).unwrap().frobenius_norm()
            / h.as_matrix().frobenius_norm();
        assert!(rel < 1e-9);
        let vv = e.vectors.adjoint().matmul(&e.vectors).unwrap();
        assert!(vv.max_abs_diff(&ComplexMatrix::identity(5)).unwrap() < 1e-10);
    }

    #[test]
    fn psd_project_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = ComplexMatrix::from_fn(4, 3, |_, _| c(rng.random::<f64>(), rng.random::<f64>()));
        let psd = HermitianMatrix::from_raw(a.matmul(&a.adjoint()).unwrap());
        let p = psd_project(&psd).unwrap();
        assert!(p.as_matrix().max_abs_diff(psd.as_matrix()).unwrap() < 1e-10);

        let p = psd_project(&HermitianMatrix::diagonal(&[1.0, -2.0])).unwrap();
        assert!(
            p.as_matrix()
                .max_abs_diff(HermitianMatrix::diagonal(&[1.0, 0.0]).as_matrix())
                .unwrap()
                < 1e-14
        );
    }

    #[test]
    fn psd_project_beats_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let h = random_hermitian(6, &mut rng);
        let p = psd_project(&h).unwrap();
        let best = p.as_matrix().sub(h.as_matrix()).unwrap().frobenius_norm();
        for _ in 0..200 {
            let b = ComplexMatrix::from_fn(6, 6, |_, _| {
                c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            let cand = b
                .matmul(&b.adjoint())
                .unwrap()
                .scale_real(rng.random::<f64>());
            assert!(cand.sub(h.as_matrix()).unwrap().frobenius_norm() >= best);
        }
        // Also beats small PSD perturbations of itself.
        for _ in 0..50 {
            let b = ComplexMatrix::from_fn(6, 1, |_, _| {
                c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            let cand = p
                .as_matrix()
                .add(&b.matmul(&b.adjoint()).unwrap().scale_real(0.01))
                .unwrap();
            assert!(cand.sub(h.as_matrix()).unwrap().frobenius_norm() >= best - 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn psd_projection_idempotent_nonexpansive(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_hermitian(5, &mut rng);
                let b = random_hermitian(5, &mut rng);
                let pa = psd_project(&a).unwrap();
                let pb = psd_project(&b).unwrap();
                let ppa = psd_project(&pa).unwrap();
                prop_assert!(ppa.as_matrix().max_abs_diff(pa.as_matrix()).unwrap() < 1e-12);
                let lhs = pa.as_matrix().sub(pb.as_matrix()).unwrap().frobenius_norm();
                let rhs = a.as_matrix().sub(b.as_matrix()).unwrap().frobenius_norm();
                prop_assert!(lhs <= rhs + 1e-12);
            }
        }
    }
}
