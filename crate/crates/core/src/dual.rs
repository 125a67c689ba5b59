//! The vector dual polynomial `Q(f) = Y^* a(f)`: evaluation, grid suprema,
//! optimality certification and peak-based frequency localization.

use std::io::Write;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::linalg::{hermitian_eig, HermitianMatrix};
use crate::matrix::{vec_norm, ComplexMatrix, C64};
use crate::model::{atom, wrap_distance, FrequencySet, ObservationSet, SpectralInstance};

/// Golden-section refinement stops once the bracket is this narrow.
const REFINE_RESOLUTION: f64 = 1e-10;

pub const DEFAULT_GRID_SIZE: usize = 8192;
pub const DEFAULT_PEAK_TOL: f64 = 1e-3;
/// Candidates whose fitted coefficient row falls below this fraction of the
/// largest row are dropped by [`prune_by_amplitude`].
pub const DEFAULT_PRUNE_TOL: f64 = 1e-4;
/// Relative eigenvalue cutoff for the least-squares pseudo-inverse.
const LSQ_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPolynomial {
    y: ComplexMatrix,
}

impl DualPolynomial {
    pub fn new(y: ComplexMatrix) -> Self {
        Self { y }
    }

    pub fn n(&self) -> usize {
        self.y.rows()
    }

    pub fn num_signals(&self) -> usize {
        self.y.cols()
    }

    pub fn coefficients(&self) -> &ComplexMatrix {
        &self.y
    }

    pub fn eval(&self, f: f64) -> Result<Vec<C64>> {
        let a = atom(f, self.n())?;
        self.y.adjoint_mul_vec(&a)
    }

    pub fn norm_at(&self, f: f64) -> Result<f64> {
        Ok(vec_norm(&self.eval(f)?))
    }

    /// `||Q||_2` at `f` for any real `f`, reduced mod 1.
    fn norm_wrapped(&self, f: f64) -> f64 {
        let f = f.rem_euclid(1.0);
        let f = if f >= 1.0 { 0.0 } else { f };
        self.norm_at(f).expect("frequency reduced into range")
    }

    /// `||Q(j / grid_size)||_2` for `j = 0..grid_size`.
    pub fn grid_norms(&self, grid_size: usize) -> Result<Vec<f64>> {
        let n = self.n();
        if grid_size < n {
            return Err(invalid(format!(
                "grid of {grid_size} points is smaller than n = {n}"
            )));
        }
        let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(grid_size);
        let scale = 1.0 / (n as f64).sqrt();
        let mut sq = vec![0.0; grid_size];
        let mut buf = vec![C64::new(0.0, 0.0); grid_size];
        for j in 0..self.num_signals() {
            buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            for i in 0..n {
                buf[i] = self.y[(i, j)].conj() * scale;
            }
            fft.process(&mut buf);
            for (s, z) in sq.iter_mut().zip(&buf) {
                *s += z.norm_sqr();
            }
        }
        Ok(sq.into_iter().map(f64::sqrt).collect())
    }

    /// Golden-section search for a local maximum of `||Q||_2` on `[lo, hi]`.
    fn refine(&self, lo: f64, hi: f64) -> (f64, f64) {
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = self.norm_wrapped(c);
        let mut fd = self.norm_wrapped(d);
        while b - a > REFINE_RESOLUTION {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = self.norm_wrapped(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = self.norm_wrapped(d);
            }
        }
        let f = 0.5 * (a + b);
        (self.norm_wrapped(f), f.rem_euclid(1.0) % 1.0)
    }
}

/// Largest `||Q(f)||_2` over a uniform grid, returned as `(value, argmax)`.
///
/// With `refine`, the best grid point is polished by golden-section search
/// within one grid step on either side; the refined value never falls below
/// the grid maximum.
pub fn sup_norm_on_grid(dp: &DualPolynomial, grid_size: usize, refine: bool) -> Result<(f64, f64)> {
    let n = dp.n();
    if grid_size < 4 * n {
        return Err(invalid(format!(
            "grid of {grid_size} points is below the 4n = {} minimum",
            4 * n
        )));
    }
    let norms = dp.grid_norms(grid_size)?;
    // First maximizer, so ties resolve to the lowest frequency.
    let (best, value) =
        norms.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc },
        );
    let f = best as f64 / grid_size as f64;
    if !refine || value == 0.0 {
        return Ok((value, f));
    }
    let step = 1.0 / grid_size as f64;
    let (rv, rf) = dp.refine(f - step, f + step);
    Ok(if rv >= value { (rv, rf) } else { (value, f) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyTolerances {
    pub grid_size: usize,
    /// Half-width of the window excluded around each true frequency when
    /// measuring the off-support margin. Defaults to `1/(4n)`.
    pub exclusion: Option<f64>,
    /// Bound on `||Q(f_k) - b_k||_2`.
    pub interpolation: f64,
    /// Bound on off-`Ω` row norms, relative to `||Y||_F`.
    pub leakage_rel: f64,
}

impl Default for CertifyTolerances {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            exclusion: None,
            interpolation: 1e-2,
            leakage_rel: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `||Q(f_k) - b_k||_2` per true frequency.
    pub c1_residuals: Vec<f64>,
    /// `1 - max ||Q(f)||_2` over the grid away from the true frequencies.
    pub c2_margin: f64,
    /// Largest row norm of `Y` outside the sampled rows.
    pub c3_leakage: f64,
    pub passed: bool,
    pub grid_size: usize,
    /// `max_f ||Q(f)||_2` over the whole grid with refinement.
    pub sup_norm: f64,
    pub exclusion: f64,
}

impl CertificateReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Checks interpolation of the coefficient directions on the support, strict
/// sub-unit modulus away from it, and vanishing of `Y` off the sampled rows.
pub fn certify(
    dp: &DualPolynomial,
    instance: &SpectralInstance,
    omega: &[usize],
    tol: &CertifyTolerances,
) -> Result<CertificateReport> {
    let n = dp.n();
    if instance.n() != n || instance.num_signals() != dp.num_signals() {
        return Err(mismatch(format!(
            "dual polynomial is {}x{} but instance is {}x{}",
            n,
            dp.num_signals(),
            instance.n(),
            instance.num_signals()
        )));
    }
    if let Some(&bad) = omega.iter().find(|&&i| i >= n) {
        return Err(invalid(format!(
            "sample index {bad} out of range for n = {n}"
        )));
    }
    let exclusion = tol.exclusion.unwrap_or(1.0 / (4.0 * n as f64));

    let coeffs = instance.coeffs();
    let freqs = instance.freqs().as_slice();
    let mut c1_residuals = Vec::with_capacity(freqs.len());
    for (k, &f) in freqs.iter().enumerate() {
        let c = coeffs.row_norm(k);
        if c == 0.0 {
            return Err(invalid(format!(
                "coefficient row {k} is zero; its direction is undefined"
            )));
        }
        let q = dp.eval(f)?;
        let res: f64 = q
            .iter()
            .zip(coeffs.row(k))
            .map(|(qi, ci)| (qi - ci.conj() / c).norm_sqr())
            .sum();
        c1_residuals.push(res.sqrt());
    }

    let grid_size = tol.grid_size;
    let norms = {
        if grid_size < 4 * n {
            return Err(invalid(format!(
                "grid of {grid_size} points is below the 4n = {} minimum",
                4 * n
            )));
        }
        dp.grid_norms(grid_size)?
    };
    let outside = |f: f64| freqs.iter().all(|&fk| wrap_distance(f, fk) > exclusion);
    let off_best = norms
        .iter()
        .enumerate()
        .filter(|(j, _)| outside(*j as f64 / grid_size as f64))
        .max_by(|a, b| a.1.total_cmp(b.1));
    let off_max = match off_best {
        None => 0.0,
        Some((j, &v)) => {
            let f = j as f64 / grid_size as f64;
            let step = 1.0 / grid_size as f64;
            let (rv, rf) = dp.refine(f - step, f + step);
            if outside(rf) {
                v.max(rv)
            } else {
                v
            }
        }
    };
    let c2_margin = 1.0 - off_max;
    let (sup_norm, _) = sup_norm_on_grid(dp, grid_size, true)?;

    let mut sampled = vec![false; n];
    omega.iter().for_each(|&i| sampled[i] = true);
    let c3_leakage = (0..n)
        .filter(|&i| !sampled[i])
        .map(|i| dp.y.row_norm(i))
        .fold(0.0, f64::max);

    let passed = c1_residuals.iter().all(|&r| r <= tol.interpolation)
        && c2_margin > 0.0
        && c3_leakage <= tol.leakage_rel * dp.y.frobenius_norm();
    Ok(CertificateReport {
        c1_residuals,
        c2_margin,
        c3_leakage,
        passed,
        grid_size,
        sup_norm,
        exclusion,
    })
}

/// Refined local maxima of `||Q||_2` reaching at least `1 - peak_tol`.
pub fn localize_frequencies(
    dp: &DualPolynomial,
    grid_size: usize,
    peak_tol: f64,
) -> Result<FrequencySet> {
    let norms = dp.grid_norms(grid_size)?;
    let g = grid_size;
    let step = 1.0 / g as f64;
    let mut found: Vec<f64> = Vec::new();
    for j in 0..g {
        let v = norms[j];
        if v == 0.0 || v < norms[(j + g - 1) % g] || v < norms[(j + 1) % g] {
            continue;
        }
        let f = j as f64 * step;
        let (rv, rf) = dp.refine(f - step, f + step);
        if rv.max(v) < 1.0 - peak_tol {
            continue;
        }
        let rf = if rv >= v { rf } else { f };
        if found.iter().all(|&e| wrap_distance(e, rf) > 0.5 * step) {
            found.push(rf);
        }
    }
    FrequencySet::new(found)
}

/// Least-squares coefficients of the observed rows on the candidate atoms.
///
/// Returns one row per candidate. Needs at least as many observed rows as
/// candidates; a rank-deficient fit gets the minimum-norm solution.
pub fn fit_amplitudes(candidates: &FrequencySet, obs: &ObservationSet) -> Result<ComplexMatrix> {
    let k = candidates.len();
    if k > obs.m() {
        return Err(invalid(format!(
            "{k} candidate frequencies exceed {} observed rows",
            obs.m()
        )));
    }
    let v = candidates.vandermonde(obs.n()).select_rows(obs.omega())?;
    let gram = v.adjoint().matmul(&v)?;
    let eig = hermitian_eig(&HermitianMatrix::new(gram)?)?;
    let top = eig.values.last().copied().unwrap_or(0.0);
    let pinv = eig.reconstruct_with(|x| if x > LSQ_RCOND * top { 1.0 / x } else { 0.0 });
    pinv.matmul(&v.adjoint().matmul(obs.observed())?)
}

/// Drops localized peaks that carry no energy in the observed data.
///
/// When the dual polynomial has side lobes touching one, peak detection alone
/// overcounts; refitting the data on all peaks assigns those lobes coefficient
/// rows near zero. With more peaks than observed rows, only the `m` peaks
/// closest to unity enter the fit.
pub fn prune_by_amplitude(
    dp: &DualPolynomial,
    candidates: &FrequencySet,
    obs: &ObservationSet,
    rel_tol: f64,
) -> Result<FrequencySet> {
    if candidates.is_empty() {
        return Ok(candidates.clone());
    }
    let mut pool = candidates.as_slice().to_vec();
    if pool.len() > obs.m() {
        let mut ranked = pool
            .iter()
            .map(|&f| dp.norm_at(f).map(|v| (v, f)))
            .collect::<Result<Vec<_>>>()?;
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        pool = ranked.into_iter().take(obs.m()).map(|(_, f)| f).collect();
    }
    let pool = FrequencySet::new(pool)?;
    let coeffs = fit_amplitudes(&pool, obs)?;
    let norms: Vec<f64> = (0..coeffs.rows()).map(|i| coeffs.row_norm(i)).collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    let kept = pool
        .as_slice()
        .iter()
        .zip(&norms)
        .filter(|&(_, &w)| w > rel_tol * top)
        .map(|(&f, _)| f)
        .collect();
    FrequencySet::new(kept)
}

/// Writes `f,q_norm` rows over a uniform grid.
pub fn write_grid_csv<W: Write>(dp: &DualPolynomial, grid_size: usize, out: W) -> Result<()> {
    let norms = dp.grid_norms(grid_size)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["f", "q_norm"])?;
    for (j, v) in norms.iter().enumerate() {
        w.write_record([
            format!("{:.17e}", j as f64 / grid_size as f64),
            format!("{v:.17e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
