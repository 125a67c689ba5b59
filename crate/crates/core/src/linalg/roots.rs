//! Complex polynomial roots from the eigenvalues of the companion matrix,
//! computed with a shifted QR iteration on the upper Hessenberg form.

use crate::error::{invalid, Error, Result};
use crate::matrix::C64;

const MAX_ITERS_PER_ROOT: usize = 60;

/// Roots of `sum_t coeffs[t] z^t`. Leading zero coefficients are dropped.
pub fn polynomial_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let scale = coeffs.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    if scale == 0.0 {
        return Err(invalid("zero polynomial has no well-defined roots"));
    }
    let mut degree = coeffs.len() - 1;
    while degree > 0 && coeffs[degree].norm() <= 1e-14 * scale {
        degree -= 1;
    }
    if degree == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[degree];
    let n = degree;
    // Companion matrix: first row -c_{n-1}/c_n ... -c_0/c_n, ones on the subdiagonal.
    let mut h = vec![C64::new(0.0, 0.0); n * n];
    for j in 0..n {
        h[j] = -coeffs[n - 1 - j] / lead;
    }
    for i in 1..n {
        h[i * n + i - 1] = C64::new(1.0, 0.0);
    }
    let mut roots = hessenberg_eigenvalues(h, n)?;
    for z in roots.iter_mut() {
        *z = newton_polish(&coeffs[..=degree], *z);
    }
    Ok(roots)
}

fn eval_with_derivative(coeffs: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn newton_polish(coeffs: &[C64], mut z: C64) -> C64 {
    for _ in 0..3 {
        let (p, dp) = eval_with_derivative(coeffs, z);
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        let next = z - step;
        // Accept only improving steps so clustered roots are not thrown around.
        if eval_with_derivative(coeffs, next).0.norm() < p.norm() {
            z = next;
        } else {
            break;
        }
    }
    z
}

/// Givens rotation `[[c, s], [-conj(s), c]]` mapping `(a, b)` to `(r, 0)`.
fn givens(a: C64, b: C64) -> (f64, C64) {
    let na = a.norm();
    let nb = b.norm();
    if nb == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if na == 0.0 {
        return (0.0, C64::new(1.0, 0.0));
    }
    let nu = na.hypot(nb);
    let phase = a / na;
    (na / nu, phase * b.conj() / nu)
}

/// Eigenvalues of a row-major upper Hessenberg matrix.
fn hessenberg_eigenvalues(mut h: Vec<C64>, n: usize) -> Result<Vec<C64>> {
    let mut eigs = Vec::with_capacity(n);
    let mut hi = n;
    let mut iters = 0;
    let mut since_deflation = 0;
    while hi > 0 {
        if hi == 1 {
            eigs.push(h[0]);
            break;
        }
        let last = hi - 1;
        // Find the active block [lo, last].
        let mut lo = last;
        while lo > 0 {
            let sub = h[lo * n + lo - 1].norm();
            let diag = h[lo * n + lo].norm() + h[(lo - 1) * n + lo - 1].norm();
            if sub <= f64::EPSILON * diag.max(f64::MIN_POSITIVE) {
                h[lo * n + lo - 1] = C64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == last {
            eigs.push(h[last * n + last]);
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        iters += 1;
        since_deflation += 1;
        if iters > MAX_ITERS_PER_ROOT * n {
            return Err(Error::NotConverged {
                what: "companion QR iteration",
                iters,
            });
        }

        // Wilkinson shift from the trailing 2x2 block, with an occasional exceptional shift.
        let a = h[(last - 1) * n + last - 1];
        let b = h[(last - 1) * n + last];
        let c = h[last * n + last - 1];
        let d = h[last * n + last];
        let shift = if since_deflation % 11 == 10 {
            d + C64::new(h[last * n + last - 1].norm() * 0.75, 0.0)
        } else {
            let tr = a + d;
            let det = a * d - b * c;
            let disc = (tr * tr * 0.25 - det).sqrt();
            let l1 = tr * 0.5 + disc;
            let l2 = tr * 0.5 - disc;
            if (l1 - d).norm() < (l2 - d).norm() {
                l1
            } else {
                l2
            }
        };

        for k in lo..=last {
            h[k * n + k] -= shift;
        }
        let mut rots = Vec::with_capacity(last - lo);
        for k in lo..last {
            let (cs, sn) = givens(h[k * n + k], h[(k + 1) * n + k]);
            for j in k..=last {
                let x = h[k * n + j];
                let y = h[(k + 1) * n + j];
                h[k * n + j] = x * cs + sn * y;
                h[(k + 1) * n + j] = -sn.conj() * x + y * cs;
            }
            rots.push((cs, sn));
        }
        for (idx, &(cs, sn)) in rots.iter().enumerate() {
            let k = lo + idx;
            for i in lo..=(k + 1).min(last) {
                let x = h[i * n + k];
                let y = h[i * n + k + 1];
                h[i * n + k] = x * cs + y * sn.conj();
                h[i * n + k + 1] = -x * sn + y * cs;
            }
        }
        for k in lo..=last {
            h[k * n + k] += shift;
        }
    }
    Ok(eigs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_by_angle(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
        v
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (z - 1)(z - i)(z + 2) = z^3 + (1 - i) z^2 + (-2 - i) z + 2i
        let coeffs = [
            C64::new(0.0, 2.0),
            C64::new(-2.0, -1.0),
            C64::new(1.0, -1.0),
            C64::new(1.0, 0.0),
        ];
        let roots = sorted_by_angle(polynomial_roots(&coeffs).unwrap());
        let want = sorted_by_angle(vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 1.0),
            C64::new(-2.0, 0.0),
        ]);
        for (a, b) in roots.iter().zip(&want) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn unit_circle_roots() {
        let freqs = [0.05, 0.21, 0.33, 0.5, 0.61, 0.9];
        let mut coeffs = vec![C64::new(1.0, 0.0)];
        for &f in &freqs {
            let z = C64::from_polar(1.0, std::f64::consts::TAU * f);
            let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
            for (t, &c) in coeffs.iter().enumerate() {
                next[t + 1] += c;
                next[t] -= c * z;
            }
            coeffs = next;
        }
        let roots = polynomial_roots(&coeffs).unwrap();
        let mut got: Vec<f64> = roots
            .iter()
            .map(|z| (z.arg() / std::f64::consts::TAU).rem_euclid(1.0))
            .collect();
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&freqs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_polynomial() {
        assert!(polynomial_roots(&[C64::new(3.0, 0.0)]).unwrap().is_empty());
        assert!(polynomial_roots(&[C64::new(0.0, 0.0)]).is_err());
    }
}
