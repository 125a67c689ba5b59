//! Hermitian eigensolver by Householder reduction to a real tridiagonal
//! matrix followed by implicit QL iterations. Used in the splitting solver's
//! inner loop, where it is several times cheaper than Jacobi on the embedding.

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64};

const MAX_QL_ITERS_PER_EIGENVALUE: usize = 60;

/// Reusable buffers for repeated decompositions of same-sized matrices.
#[derive(Debug, Clone)]
pub struct PsdProjector {
    n: usize,
    a: Vec<C64>,
    reflectors: Vec<Option<Vec<C64>>>,
    phases: Vec<C64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    zt: Vec<f64>,
}

impl PsdProjector {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            a: Vec::with_capacity(n * n),
            reflectors: Vec::with_capacity(n),
            phases: vec![C64::new(1.0, 0.0); n],
            diag: vec![0.0; n],
            off: vec![0.0; n],
            zt: vec![0.0; n * n],
        }
    }

    /// Projects Hermitian `h` onto the PSD cone, writing the result into `out`.
    /// Returns the extreme eigenvalues `(min, max)` of `h`.
    pub fn project(&mut self, h: &ComplexMatrix, out: &mut ComplexMatrix) -> Result<(f64, f64)> {
        let n = self.n;
        self.decompose(h)?;
        out.as_mut_slice()
            .iter_mut()
            .for_each(|z| *z = C64::new(0.0, 0.0));
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut v = vec![C64::new(0.0, 0.0); n];
        for k in 0..n {
            let lam = self.diag[k];
            lo = lo.min(lam);
            hi = hi.max(lam);
            if lam <= 0.0 {
                continue;
            }
            self.eigenvector_into(k, &mut v);
            for i in 0..n {
                let vi = v[i] * lam;
                let row = out.row_mut(i);
                for (o, vj) in row.iter_mut().zip(&v) {
                    *o += vi * vj.conj();
                }
            }
        }
        for i in 0..n {
            let d = out[(i, i)].re;
            out[(i, i)] = C64::new(d, 0.0);
        }
        Ok((lo, hi))
    }

    /// Full decomposition: ascending eigenvalues and eigenvector columns.
    pub fn eigen(&mut self, h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
        let n = self.n;
        self.decompose(h)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| self.diag[i].total_cmp(&self.diag[j]));
        let mut vecs = ComplexMatrix::zeros(n, n);
        let mut v = vec![C64::new(0.0, 0.0); n];
        for (col, &k) in order.iter().enumerate() {
            self.eigenvector_into(k, &mut v);
            for i in 0..n {
                vecs[(i, col)] = v[i];
            }
        }
        Ok((order.iter().map(|&k| self.diag[k]).collect(), vecs))
    }

    fn decompose(&mut self, h: &ComplexMatrix) -> Result<()> {
        let n = self.n;
        debug_assert_eq!(h.shape(), (n, n));
        self.a.clear();
        self.a.extend_from_slice(h.as_slice());
        self.tridiagonalize();
        self.zt.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            self.zt[i * n + i] = 1.0;
        }
        implicit_ql(&mut self.diag, &mut self.off, &mut self.zt, n)
    }

    /// Reduces `a` to Hermitian tridiagonal form with reflectors `I - 2 v v^*`,
    /// then rescales by a diagonal unitary so the off-diagonal is real.
    fn tridiagonalize(&mut self) {
        let n = self.n;
        let a = &mut self.a;
        self.reflectors.clear();
        let mut p = vec![C64::new(0.0, 0.0); n];
        for k in 0..n.saturating_sub(2) {
            let s = n - k - 1;
            let mut v: Vec<C64> = (0..s).map(|i| a[(k + 1 + i) * n + k]).collect();
            let norm = crate::matrix::vec_norm(&v);
            if norm <= f64::MIN_POSITIVE {
                self.reflectors.push(None);
                continue;
            }
            let x0 = v[0];
            let phase = if x0.norm() > 0.0 {
                x0 / x0.norm()
            } else {
                C64::new(1.0, 0.0)
            };
            let alpha = -phase * norm;
            v[0] -= alpha;
            let vnorm = crate::matrix::vec_norm(&v);
            v.iter_mut().for_each(|z| *z /= vnorm);

            // p = B v on the trailing block B = a[k+1.., k+1..].
            for i in 0..s {
                let row = &a[(k + 1 + i) * n + k + 1..(k + 1 + i) * n + n];
                p[i] = row.iter().zip(&v).map(|(x, y)| x * y).sum();
            }
            let mu: f64 = v.iter().zip(&p[..s]).map(|(x, y)| (x.conj() * y).re).sum();
            // w = 2 (p - mu v); B -= v w^* + w v^*.
            for i in 0..s {
                p[i] = (p[i] - v[i] * mu) * 2.0;
            }
            for i in 0..s {
                let (vi, wi) = (v[i], p[i]);
                let row = &mut a[(k + 1 + i) * n + k + 1..(k + 1 + i) * n + n];
                for ((x, vj), wj) in row.iter_mut().zip(&v).zip(&p[..s]) {
                    *x -= vi * wj.conj() + wi * vj.conj();
                }
            }
            a[(k + 1) * n + k] = alpha;
            a[k * n + k + 1] = alpha.conj();
            for i in 1..s {
                a[(k + 1 + i) * n + k] = C64::new(0.0, 0.0);
                a[k * n + k + 1 + i] = C64::new(0.0, 0.0);
            }
            self.reflectors.push(Some(v));
        }

        self.phases[0] = C64::new(1.0, 0.0);
        for i in 0..n {
            self.diag[i] = a[i * n + i].re;
        }
        for k in 0..n.saturating_sub(1) {
            let e = a[(k + 1) * n + k];
            let mag = e.norm();
            self.off[k] = mag;
            self.phases[k + 1] = if mag > 0.0 {
                self.phases[k] * e / mag
            } else {
                self.phases[k]
            };
        }
        self.off[n - 1] = 0.0;
    }

    /// Eigenvector `k` of the original matrix: `H_0 ... H_{n-3} D z_k`.
    fn eigenvector_into(&self, k: usize, v: &mut [C64]) {
        let n = self.n;
        let z = &self.zt[k * n..(k + 1) * n];
        for i in 0..n {
            v[i] = self.phases[i] * z[i];
        }
        for (idx, refl) in self.reflectors.iter().enumerate().rev() {
            if let Some(h) = refl {
                let tail = &mut v[idx + 1..];
                let s: C64 = h.iter().zip(tail.iter()).map(|(a, b)| a.conj() * b).sum();
                for (t, hv) in tail.iter_mut().zip(h) {
                    *t -= hv * s * 2.0;
                }
            }
        }
    }
}

/// Implicit QL with Wilkinson-style shifts on the symmetric tridiagonal
/// (`d`, `e`), `e[i]` coupling `i` and `i+1`. Rotations are accumulated into
/// the rows of `zt`.
fn implicit_ql(d: &mut [f64], e: &mut [f64], zt: &mut [f64], n: usize) -> Result<()> {
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    e[n - 1] = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iters = 0;
            loop {
                iters += 1;
                if iters > MAX_QL_ITERS_PER_EIGENVALUE {
                    return Err(Error::NotConverged {
                        what: "tridiagonal QL iteration",
                        iters,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (head, tail) = zt.split_at_mut((i + 1) * n);
                    let zi = &mut head[i * n..];
                    let zi1 = &mut tail[..n];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let hb = *b;
                        *b = s * *a + c * hb;
                        *a = c * *a - s * hb;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}
