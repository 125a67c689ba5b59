//! Lawson-Hanson nonnegative least squares for small dense systems.

use crate::error::{mismatch, Error, Result};

/// Solves `min ||A x - b||_2` subject to `x >= 0`. `a` is row-major `rows x cols`.
pub fn nnls(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != rows * cols || b.len() != rows {
        return Err(mismatch("nnls system dimensions disagree"));
    }
    let col = |j: usize| (0..rows).map(move |i| a[i * cols + j]);
    let gradient = |x: &[f64]| -> Vec<f64> {
        let resid: Vec<f64> = (0..rows)
            .map(|i| b[i] - (0..cols).map(|j| a[i * cols + j] * x[j]).sum::<f64>())
            .collect();
        (0..cols)
            .map(|j| col(j).zip(&resid).map(|(x, r)| x * r).sum())
            .collect()
    };
    let scale =
        a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE) * rows as f64;

    let mut x = vec![0.0; cols];
    let mut passive = vec![false; cols];
    let max_outer = 3 * cols + 10;
    for _ in 0..max_outer {
        let w = gradient(&x);
        let candidate = (0..cols)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else {
            return Ok(x);
        };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..cols).filter(|&j| passive[j]).collect();
            let z = passive_least_squares(a, rows, cols, b, &idx)?;
            if z.iter().all(|&v| v > 0.0) {
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z[k];
                }
                break;
            }
            // Step back toward x until the first passive variable hits zero.
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(x[j] / (x[j] - z[k]));
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z[k] - x[j]);
                if x[j] <= 1e-15 * scale.sqrt() {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    Err(Error::NotConverged {
        what: "nonnegative least squares",
        iters: max_outer,
    })
}

/// Unconstrained least squares on the selected columns via Cholesky of the normal equations.
fn passive_least_squares(
    a: &[f64],
    rows: usize,
    cols: usize,
    b: &[f64],
    idx: &[usize],
) -> Result<Vec<f64>> {
    let k = idx.len();
    let mut g = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for i in 0..rows {
        let row = &a[i * cols..(i + 1) * cols];
        for (p, &jp) in idx.iter().enumerate() {
            rhs[p] += row[jp] * b[i];
            for (q, &jq) in idx.iter().enumerate().skip(p) {
                g[p * k + q] += row[jp] * row[jq];
            }
        }
    }
    for p in 0..k {
        for q in 0..p {
            g[p * k + q] = g[q * k + p];
        }
    }
    // In-place Cholesky, lower triangle.
    for j in 0..k {
        let mut d = g[j * k + j];
        for t in 0..j {
            d -= g[j * k + t] * g[j * k + t];
        }
        if d <= 0.0 {
            return Err(Error::IllConditioned(
                "singular normal equations in nnls".into(),
            ));
        }
        let d = d.sqrt();
        g[j * k + j] = d;
        for i in j + 1..k {
            let mut s = g[i * k + j];
            for t in 0..j {
                s -= g[i * k + t] * g[j * k + t];
            }
            g[i * k + j] = s / d;
        }
    }
    let mut y = rhs;
    for i in 0..k {
        for t in 0..i {
            y[i] -= g[i * k + t] * y[t];
        }
        y[i] /= g[i * k + i];
    }
    for i in (0..k).rev() {
        for t in i + 1..k {
            y[i] -= g[t * k + i] * y[t];
        }
        y[i] /= g[i * k + i];
    }
    Ok(y)
}
