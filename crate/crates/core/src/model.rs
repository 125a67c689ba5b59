//! Multi-vector spectrally-sparse signal model: atoms, synthesis, row sampling
//! and the random instance generators used by the experiments.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::matrix::{ComplexMatrix, C64};

/// Attempts made by [`draw_frequencies`] before giving up.
pub const DEFAULT_MAX_ATTEMPTS: usize = 100_000;

/// Unit-norm complex sinusoid `(1/sqrt(n)) [1, e^{i2πf}, ..., e^{i2πf(n-1)}]`.
pub fn atom(f: f64, n: usize) -> Result<Vec<C64>> {
    if !(0.0..1.0).contains(&f) {
        return Err(invalid(format!("frequency {f} outside [0, 1)")));
    }
    if n == 0 {
        return Err(invalid("atom length must be positive"));
    }
    Ok(atom_unchecked(f, n))
}

/// Same as [`atom`] without range checks; `f` may be any real number.
pub(crate) fn atom_unchecked(f: f64, n: usize) -> Vec<C64> {
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            // Reduce the phase before scaling by 2π to keep large k accurate.
            let phase = (f * k as f64).rem_euclid(1.0) * TAU;
            C64::from_polar(scale, phase)
        })
        .collect()
}

/// Circular distance between two frequencies on the unit circle `[0, 1)`.
pub fn wrap_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Sorted, pairwise-distinct frequencies in cycles per sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FrequencySet(Vec<f64>);

impl FrequencySet {
    /// Sorts the input; rejects values outside `[0, 1)` and duplicates.
    pub fn new(mut freqs: Vec<f64>) -> Result<Self> {
        if let Some(f) = freqs.iter().find(|f| !(0.0..1.0).contains(*f)) {
            return Err(invalid(format!("frequency {f} outside [0, 1)")));
        }
        freqs.sort_by(f64::total_cmp);
        if freqs.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate frequencies"));
        }
        Ok(Self(freqs))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Smallest wrap-around gap between neighbours; infinite for fewer than two.
    pub fn min_separation(&self) -> f64 {
        let f = &self.0;
        if f.len() < 2 {
            return f64::INFINITY;
        }
        let inner = f
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        inner.min(1.0 - f[f.len() - 1] + f[0])
    }

    /// Vandermonde matrix `[a(f_1), ..., a(f_r)]` of size `n x r`.
    pub fn vandermonde(&self, n: usize) -> ComplexMatrix {
        let cols: Vec<Vec<C64>> = self.0.iter().map(|&f| atom_unchecked(f, n)).collect();
        ComplexMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
    }
}

impl<'de> Deserialize<'de> for FrequencySet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        FrequencySet::new(v).map_err(serde::de::Error::custom)
    }
}

/// Ground truth `X = V(freqs) C` together with its generating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInstance {
    n: usize,
    freqs: FrequencySet,
    coeffs: ComplexMatrix,
    signal: ComplexMatrix,
    seed: Option<u64>,
}

impl SpectralInstance {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of signals `L`.
    pub fn num_signals(&self) -> usize {
        self.coeffs.cols()
    }

    pub fn freqs(&self) -> &FrequencySet {
        &self.freqs
    }

    pub fn coeffs(&self) -> &ComplexMatrix {
        &self.coeffs
    }

    pub fn signal(&self) -> &ComplexMatrix {
        &self.signal
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Row-sampled observations `Z_Ω = P_Ω(X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObservationWire", into = "ObservationWire")]
pub struct ObservationSet {
    n: usize,
    omega: Vec<usize>,
    observed: ComplexMatrix,
}

impl ObservationSet {
    /// Validates that `omega` is strictly increasing, in range and matches `observed`.
    pub fn new(n: usize, omega: Vec<usize>, observed: ComplexMatrix) -> Result<Self> {
        if omega.is_empty() {
            return Err(invalid("observation set must contain at least one index"));
        }
        if omega.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("observation indices must be strictly increasing"));
        }
        if omega[omega.len() - 1] >= n {
            return Err(invalid(format!(
                "observation index out of range for n = {n}"
            )));
        }
        if observed.rows() != omega.len() {
            return Err(mismatch(format!(
                "{} observed rows for {} indices",
                observed.rows(),
                omega.len()
            )));
        }
        Ok(Self { n, omega, observed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.omega.len()
    }

    pub fn num_signals(&self) -> usize {
        self.observed.cols()
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn observed(&self) -> &ComplexMatrix {
        &self.observed
    }

    /// Membership mask of length `n`.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &i in &self.omega {
            mask[i] = true;
        }
        mask
    }
}

#[derive(Serialize, Deserialize)]
struct ObservationWire {
    n: usize,
    omega: Vec<usize>,
    observed: ComplexMatrix,
}

impl TryFrom<ObservationWire> for ObservationSet {
    type Error = Error;

    fn try_from(w: ObservationWire) -> Result<Self> {
        ObservationSet::new(w.n, w.omega, w.observed)
    }
}

impl From<ObservationSet> for ObservationWire {
    fn from(o: ObservationSet) -> Self {
        Self {
            n: o.n,
            omega: o.omega,
            observed: o.observed,
        }
    }
}

/// Synthesizes `X = V(freqs) C` for an `r x L` coefficient matrix.
pub fn synthesize(
    freqs: FrequencySet,
    coeffs: ComplexMatrix,
    n: usize,
) -> Result<SpectralInstance> {
    if n == 0 {
        return Err(invalid("signal length must be positive"));
    }
    if coeffs.rows() != freqs.len() {
        return Err(mismatch(format!(
            "{} coefficient rows for {} frequencies",
            coeffs.rows(),
            freqs.len()
        )));
    }
    if freqs.len() > n {
        return Err(invalid(format!(
            "{} frequencies exceed signal length {n}",
            freqs.len()
        )));
    }
    if coeffs.cols() == 0 {
        return Err(invalid("at least one signal required"));
    }
    let signal = freqs.vandermonde(n).matmul(&coeffs)?;
    Ok(SpectralInstance {
        n,
        freqs,
        coeffs,
        signal,
        seed: None,
    })
}

/// Keeps the rows of `x` indexed by `omega`, in `omega` order.
pub fn sample(x: &ComplexMatrix, omega: &[usize]) -> Result<ObservationSet> {
    let mut seen = vec![false; x.rows()];
    for &i in omega {
        if i >= x.rows() {
            return Err(invalid(format!(
                "index {i} out of range for {} rows",
                x.rows()
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(invalid(format!("duplicate index {i}")));
        }
    }
    let mut sorted = omega.to_vec();
    sorted.sort_unstable();
    if sorted.as_slice() != omega {
        // Keep the caller's order in `observed` consistent with the sorted index set.
        return sample(x, &sorted);
    }
    ObservationSet::new(x.rows(), sorted, x.select_rows(omega)?)
}

/// Draws `m` distinct indices uniformly from `0..n`, returned sorted.
pub fn draw_omega<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(invalid(format!("cannot draw {m} of {n} indices")));
    }
    let mut idx = rand::seq::index::sample(rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Rejection-samples `r` uniform frequencies whose wrap-around gaps are all at
/// least `min_sep`.
pub fn draw_frequencies<R: Rng + ?Sized>(
    r: usize,
    min_sep: f64,
    rng: &mut R,
) -> Result<FrequencySet> {
    draw_frequencies_capped(r, min_sep, DEFAULT_MAX_ATTEMPTS, rng)
}

pub fn draw_frequencies_capped<R: Rng + ?Sized>(
    r: usize,
    min_sep: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<FrequencySet> {
    if r == 0 {
        return Err(invalid("at least one frequency required"));
    }
    if !(min_sep >= 0.0) || r as f64 * min_sep >= 1.0 {
        return Err(Error::Infeasible(format!(
            "{r} frequencies cannot be separated by {min_sep} on the unit circle"
        )));
    }
    let mut freqs = vec![0.0; r];
    for _ in 0..max_attempts {
        for f in freqs.iter_mut() {
            *f = rng.random::<f64>();
        }
        freqs.sort_by(f64::total_cmp);
        let wrap_gap = 1.0 - freqs[r - 1] + freqs[0];
        let ok =
            (r == 1 || wrap_gap >= min_sep) && freqs.windows(2).all(|w| w[1] - w[0] >= min_sep);
        if ok && (r == 1 || freqs.windows(2).all(|w| w[0] < w[1])) {
            return FrequencySet::new(freqs);
        }
    }
    Err(Error::Infeasible(format!(
        "no separated draw of {r} frequencies (min_sep {min_sep}) within {max_attempts} attempts"
    )))
}

/// I.i.d. standard complex Gaussian entries (unit variance, split evenly).
pub fn draw_coefficients<R: Rng + ?Sized>(
    r: usize,
    l: usize,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    if r == 0 || l == 0 {
        return Err(invalid("coefficient matrix dimensions must be positive"));
    }
    let mut data = Vec::with_capacity(r * l);
    for _ in 0..r * l {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        data.push(C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2));
    }
    ComplexMatrix::new(r, l, data)
}

/// Draws a full random instance: separated frequencies then Gaussian coefficients.
pub fn draw_instance<R: Rng + ?Sized>(
    n: usize,
    r: usize,
    l: usize,
    min_sep: f64,
    rng: &mut R,
) -> Result<SpectralInstance> {
    let freqs = draw_frequencies(r, min_sep, rng)?;
    let coeffs = draw_coefficients(r, l, rng)?;
    synthesize(freqs, coeffs, n)
}

/// `||estimate - truth||_F / ||truth||_F`.
pub fn nmse(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    let denom = truth.frobenius_norm();
    if denom == 0.0 {
        return Err(invalid("nmse undefined for an all-zero reference"));
    }
    Ok(estimate.sub(truth)?.frobenius_norm() / denom)
}

#[derive(Serialize, Deserialize)]
struct InstanceWire {
    n: usize,
    #[serde(rename = "L")]
    l: usize,
    freqs: FrequencySet,
    coeffs: ComplexMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl Serialize for SpectralInstance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InstanceWire {
            n: self.n,
            l: self.num_signals(),
            freqs: self.freqs.clone(),
            coeffs: self.coeffs.clone(),
            seed: self.seed,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpectralInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = InstanceWire::deserialize(d)?;
        if w.coeffs.cols() != w.l {
            return Err(D::Error::custom(format!(
                "L = {} but coefficients have {} columns",
                w.l,
                w.coeffs.cols()
            )));
        }
        let inst = synthesize(w.freqs, w.coeffs, w.n).map_err(D::Error::custom)?;
        Ok(SpectralInstance {
            seed: w.seed,
            ..inst
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_vec_close(a: &[C64], b: &[C64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).norm() < tol, "{x} vs {y}");
        }
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn atom_examples() {
        let h = 0.5;
        assert_vec_close(&atom(0.0, 4).unwrap(), &[c(h, 0.0); 4], 1e-15);
        assert_vec_close(
            &atom(0.5, 4).unwrap(),
            &[c(h, 0.0), c(-h, 0.0), c(h, 0.0), c(-h, 0.0)],
            1e-15,
        );
        assert_vec_close(
            &atom(0.25, 4).unwrap(),
            &[c(h, 0.0), c(0.0, h), c(-h, 0.0), c(0.0, -h)],
            1e-15,
        );
        assert!(atom(1.0, 4).is_err());
        assert!(atom(-0.1, 4).is_err());
        assert!(atom(0.1, 0).is_err());
    }

    #[test]
    fn synthesize_examples() {
        let inst = synthesize(
            FrequencySet::new(vec![0.0]).unwrap(),
            ComplexMatrix::new(1, 1, vec![c(2.0, 0.0)]).unwrap(),
            4,
        )
        .unwrap();
        assert_vec_close(&inst.signal().column(0), &[c(1.0, 0.0); 4], 1e-15);

        let inst = synthesize(
            FrequencySet::new(vec![0.0, 0.5]).unwrap(),
            ComplexMatrix::new(2, 1, vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap(),
            2,
        )
        .unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_vec_close(
            &inst.signal().column(0),
            &[c(2.0 * s, 0.0), c(0.0, 0.0)],
            1e-15,
        );

        let err = synthesize(
            FrequencySet::new(vec![0.1]).unwrap(),
            ComplexMatrix::zeros(2, 1),
            4,
        );
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn random_instance_is_reconstructible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = draw_instance(64, 10, 3, 1.0 / 64.0, &mut rng).unwrap();
        let rebuilt = inst.freqs().vandermonde(64).matmul(inst.coeffs()).unwrap();
        assert!(nmse(&rebuilt, inst.signal()).unwrap() < 1e-12);
        assert_eq!(inst.signal().shape(), (64, 3));
    }

    #[test]
    fn sample_examples() {
        let x = ComplexMatrix::from_fn(4, 2, |i, j| c(i as f64, j as f64));
        let full = sample(&x, &[0, 1, 2, 3]).unwrap();
        assert_eq!(full.observed(), &x);
        let one = sample(&x, &[2]).unwrap();
        assert_eq!(one.observed().row(0), x.row(2));
        assert!(sample(&x, &[1, 1]).is_err());
        assert!(sample(&x, &[4]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let big = ComplexMatrix::zeros(64, 3);
        let omega = draw_omega(64, 32, &mut rng).unwrap();
        let obs = sample(&big, &omega).unwrap();
        assert_eq!(obs.m(), 32);
        assert_eq!(obs.observed().shape(), (32, 3));
    }

    #[test]
    fn frequency_draw_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let one = draw_frequencies(1, 1.0 / 64.0, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        let ten = draw_frequencies(10, 1.0 / 64.0, &mut rng).unwrap();
        assert_eq!(ten.len(), 10);
        assert!(ten.min_separation() >= 0.015625);
        assert!(matches!(
            draw_frequencies(64, 1.0 / 64.0, &mut rng),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            draw_frequencies_capped(40, 0.024, 10, &mut rng),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn coefficient_moments() {
        // 10^5 complex entries: mean ~ 0 and E|z|^2 ~ 1 within 3 standard errors.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let m = draw_coefficients(1000, 100, &mut rng).unwrap();
        let count = m.as_slice().len() as f64;
        let mean: C64 = m.as_slice().iter().sum::<C64>() / count;
        let var: f64 = m.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>() / count;
        // Re and Im each have variance 1/2, so the mean components have s.e. sqrt(0.5/N).
        let se_mean = (0.5 / count).sqrt();
        assert!(mean.re.abs() < 3.0 * se_mean && mean.im.abs() < 3.0 * se_mean);
        // |z|^2 is Exp(1): variance 1.
        let se_var = (1.0 / count).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se_var, "variance {var}");
    }

    #[test]
    fn coefficient_determinism() {
        let a = draw_coefficients(1, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = draw_coefficients(1, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let c1 = draw_coefficients(2, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let c2 = draw_coefficients(2, 2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_ne!(c1, c2);
    }

    #[test]
    fn nmse_examples() {
        let x = ComplexMatrix::from_fn(3, 2, |i, j| c(1.0 + i as f64, j as f64));
        assert_eq!(nmse(&x, &x).unwrap(), 0.0);
        assert!((nmse(&x.scale_real(2.0), &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((nmse(&ComplexMatrix::zeros(3, 2), &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmse(&x, &ComplexMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn instance_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = draw_instance(16, 3, 2, 1.0 / 16.0, &mut rng)
            .unwrap()
            .with_seed(3);
        let json = serde_json::to_value(&inst).unwrap();
        assert_eq!(json["L"], 2);
        assert!(json["coeffs"]["re"].is_array() && json["coeffs"]["im"].is_array());
        let back: SpectralInstance = serde_json::from_value(json).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn wrap_distance_is_circular() {
        assert!((wrap_distance(0.01, 0.99) - 0.02).abs() < 1e-15);
        assert!((wrap_distance(0.3, 0.1) - 0.2).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn atoms_have_unit_norm(f in 0.0f64..1.0, n in 1usize..200) {
                let a = atom(f, n).unwrap();
                prop_assert!((crate::matrix::vec_norm(&a) - 1.0).abs() < 1e-14);
            }

            #[test]
            fn nmse_of_perturbation(seed in any::<u64>(), s in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = draw_coefficients(5, 2, &mut rng).unwrap();
                let e = draw_coefficients(5, 2, &mut rng).unwrap().scale_real(s);
                let got = nmse(&x.add(&e).unwrap(), &x).unwrap();
                let want = e.frobenius_norm() / x.frobenius_norm();
                prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want));
            }

            #[test]
            fn full_sampling_is_identity(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let inst = draw_instance(12, 3, 2, 1.0 / 12.0, &mut rng).unwrap();
                let omega: Vec<usize> = (0..12).collect();
                let obs = sample(inst.signal(), &omega).unwrap();
                prop_assert_eq!(obs.observed(), inst.signal());
            }
        }
    }

    #[test]
    fn separated_draws_over_many_seeds() {
        for seed in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = 1 + (seed as usize % 12);
            let f = draw_frequencies(r, 1.0 / 64.0, &mut rng).unwrap();
            assert_eq!(f.len(), r);
            let fs = f.as_slice();
            for i in 0..r {
                for j in i + 1..r {
                    assert!(wrap_distance(fs[i], fs[j]) >= 1.0 / 64.0);
                }
            }
        }
    }
}
