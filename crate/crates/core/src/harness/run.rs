use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::record::{fmt_f64, ExperimentRecord, TrialCertificate, TrialRow};
use super::{derive_seed, experiment_id, OMEGA_TAG};
use crate::baseline::{dft_frame, solve_group_mmv};
use crate::dual::{
    certify, localize_frequencies, prune_by_amplitude, CertifyTolerances, DualPolynomial,
    DEFAULT_PEAK_TOL, DEFAULT_PRUNE_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{vandermonde_decompose, DEFAULT_RANK_TOL};
use crate::matrix::ComplexMatrix;
use crate::model::{
    draw_instance, draw_omega, nmse, sample, synthesize, wrap_distance, SpectralInstance,
};
use crate::sdp::solve_primal;

/// One generated trial: the instance, its sampling pattern and the seed that produced it.
#[derive(Debug, Clone)]
pub struct TrialProblem {
    pub seed: u64,
    pub instance: SpectralInstance,
    pub omega: Vec<usize>,
}

/// Deterministic instance and sampling pattern for a trial coordinate.
pub fn trial_problem(
    cfg: &ExperimentConfig,
    experiment: u64,
    r: usize,
    l: usize,
    m: usize,
    trial: usize,
) -> Result<TrialProblem> {
    let seed = derive_seed(
        cfg.seed,
        &[experiment, r as u64, l as u64, m as u64, trial as u64],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = draw_instance(cfg.n, r, l, cfg.min_separation(), &mut rng)?.with_seed(seed);
    let omega = if cfg.fixed_omega {
        let mut orng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[experiment, OMEGA_TAG, m as u64]));
        draw_omega(cfg.n, m, &mut orng)?
    } else {
        draw_omega(cfg.n, m, &mut rng)?
    };
    Ok(TrialProblem {
        seed,
        instance,
        omega,
    })
}

fn run_jobs<J: Sync, T: Send>(
    jobs: &[J],
    workers: usize,
    f: impl Fn(&J) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if workers <= 1 {
        return jobs.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect())
}

fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    let one_way = |x: &[f64], y: &[f64]| {
        x.iter()
            .map(|&p| {
                y.iter()
                    .map(|&q| wrap_distance(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    one_way(a, b).max(one_way(b, a))
}

/// Solves one trial with the atomic-norm SDP.
fn atomic_trial(cfg: &ExperimentConfig, p: &TrialProblem, trial: usize) -> Result<TrialRow> {
    let inst = &p.instance;
    let obs = sample(inst.signal(), &p.omega)?;
    let start = Instant::now();
    let sol = solve_primal(&obs, inst.num_signals(), &cfg.solver)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let err = nmse(&sol.x_hat, inst.signal())?;
    let success = err <= cfg.success_nmse;

    let certificate = match (&sol.dual, cfg.certify && success) {
        (Some(dual), true) => {
            let dp = DualPolynomial::new(sol.dual_y.clone());
            let tol = CertifyTolerances {
                grid_size: cfg.grid_size,
                ..Default::default()
            };
            let rep = certify(&dp, inst, &p.omega, &tol)?;
            let peaks = localize_frequencies(&dp, cfg.grid_size, DEFAULT_PEAK_TOL)?;
            let loc = prune_by_amplitude(&dp, &peaks, &obs, DEFAULT_PRUNE_TOL)?;
            let truth = inst.freqs().as_slice();
            let localization_error = truth
                .iter()
                .map(|&f| {
                    loc.as_slice()
                        .iter()
                        .map(|&g| wrap_distance(f, g))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            let vd = vandermonde_decompose(&sol.u, DEFAULT_RANK_TOL).ok();
            let y_norm = sol.dual_y.frobenius_norm();
            Some(TrialCertificate {
                passed: rep.passed,
                max_c1_residual: rep.c1_residuals.iter().copied().fold(0.0, f64::max),
                c2_margin: rep.c2_margin,
                sup_norm: rep.sup_norm,
                leakage_rel: if y_norm > 0.0 {
                    dual.off_support_leakage / y_norm
                } else {
                    0.0
                },
                duality_gap: dual.relative_gap,
                peaks: peaks.len(),
                localized: loc.len(),
                localization_error,
                route_agreement: vd
                    .as_ref()
                    .map(|v| hausdorff(v.freqs.as_slice(), loc.as_slice())),
                vandermonde_count: vd.as_ref().map(|v| v.freqs.len()),
            })
        }
        _ => None,
    };

    Ok(TrialRow {
        trial,
        seed: p.seed,
        r: inst.freqs().len(),
        l: inst.num_signals(),
        m: p.omega.len(),
        method: Method::Atomic,
        nmse: err,
        success,
        iters: sol.iters,
        converged: sol.converged,
        objective: sol.objective,
        wall_time_s,
        certificate,
    })
}

fn cs_trial(
    cfg: &ExperimentConfig,
    p: &TrialProblem,
    trial: usize,
    method: Method,
    c: usize,
) -> Result<TrialRow> {
    let inst = &p.instance;
    let obs = sample(inst.signal(), &p.omega)?;
    let frame = dft_frame(cfg.n, c)?;
    let start = Instant::now();
    let sol = solve_group_mmv(&frame, &obs, &cfg.baseline)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let err = nmse(&sol.x_hat, inst.signal())?;
    Ok(TrialRow {
        trial,
        seed: p.seed,
        r: inst.freqs().len(),
        l: inst.num_signals(),
        m: p.omega.len(),
        method,
        nmse: err,
        success: err <= cfg.success_nmse,
        iters: sol.iters,
        converged: sol.converged,
        objective: sol.group_norm,
        wall_time_s,
        certificate: None,
    })
}

fn run_method(
    cfg: &ExperimentConfig,
    p: &TrialProblem,
    trial: usize,
    method: Method,
) -> Result<TrialRow> {
    match method.oversampling() {
        None => atomic_trial(cfg, p, trial),
        Some(c) => cs_trial(cfg, p, trial, method, c),
    }
}

/// Success rate of the atomic-norm SDP over a grid of sparsity levels and signal counts.
pub fn run_phase_transition(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentRecord> {
    cfg.validate()?;
    if cfg.methods != [Method::Atomic] {
        return Err(Error::Config(
            "field `methods`: phase transition runs only `atomic`".into(),
        ));
    }
    let mut jobs = Vec::new();
    for &r in &cfg.r {
        for &l in &cfg.l {
            for &m in &cfg.m {
                for trial in 0..cfg.trials {
                    jobs.push((r, l, m, trial));
                }
            }
        }
    }
    let rows = run_jobs(&jobs, workers, |&(r, l, m, trial)| {
        let p = trial_problem(cfg, experiment_id::PHASE, r, l, m, trial)?;
        atomic_trial(cfg, &p, trial)
    })?;
    Ok(ExperimentRecord::new("phase_transition", cfg.clone(), rows))
}

/// Reconstruction error of every configured method against the number of samples.
///
/// All methods at a given `(r, L, m, trial)` see the same instance and sampling pattern.
pub fn run_nmse_vs_m(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentRecord> {
    cfg.validate()?;
    if !cfg.methods.contains(&Method::Atomic)
        || !cfg.methods.iter().any(|m| m.oversampling().is_some())
    {
        return Err(Error::Config(
            "field `methods`: needs `atomic` and at least one grid-based method".into(),
        ));
    }
    let mut jobs = Vec::new();
    for &r in &cfg.r {
        for &l in &cfg.l {
            for &m in &cfg.m {
                for trial in 0..cfg.trials {
                    for &method in &cfg.methods {
                        jobs.push((r, l, m, trial, method));
                    }
                }
            }
        }
    }
    let rows = run_jobs(&jobs, workers, |&(r, l, m, trial, method)| {
        let p = trial_problem(cfg, experiment_id::SWEEP, r, l, m, trial)?;
        run_method(cfg, &p, trial, method)
    })?;
    Ok(ExperimentRecord::new("nmse_vs_m", cfg.clone(), rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualTraceCurve {
    #[serde(rename = "L")]
    pub l: usize,
    pub converged: bool,
    pub nmse: f64,
    pub iters: usize,
    /// Set when the solver failed and no trace could be produced.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// `||Q(j / grid_size)||_2` on the uniform grid.
    #[serde(skip)]
    pub values: Vec<f64>,
    /// `||Q(f_k)||_2` at the true frequencies.
    pub at_truth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualTrace {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub omega: Vec<usize>,
    pub true_freqs: Vec<f64>,
    pub grid_size: usize,
    pub curves: Vec<DualTraceCurve>,
}

impl DualTrace {
    pub fn curve(&self, l: usize) -> Option<&DualTraceCurve> {
        self.curves.iter().find(|c| c.l == l)
    }

    /// Rows `L,kind,f,q_norm`: `grid` rows for the trace and `truth` rows marking the true frequencies.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["L", "kind", "f", "q_norm"])?;
        for c in &self.curves {
            for (j, v) in c.values.iter().enumerate() {
                let f = j as f64 / self.grid_size as f64;
                w.write_record([c.l.to_string(), "grid".into(), fmt_f64(f), fmt_f64(*v)])?;
            }
            for (f, v) in self.true_freqs.iter().zip(&c.at_truth) {
                w.write_record([c.l.to_string(), "truth".into(), fmt_f64(*f), fmt_f64(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Grid trace and truth markers for a given dual variable.
pub fn dual_trace_values(
    y: &ComplexMatrix,
    freqs: &[f64],
    grid_size: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dp = DualPolynomial::new(y.clone());
    let values = dp.grid_norms(grid_size)?;
    let at_truth = freqs
        .iter()
        .map(|&f| dp.norm_at(f))
        .collect::<Result<_>>()?;
    Ok((values, at_truth))
}

/// Dual-polynomial modulus for one instance, solved separately with the first
/// `L` signals for each configured `L`. Uses the first `r` and `m` values.
pub fn run_dual_trace(cfg: &ExperimentConfig, instance_seed: u64) -> Result<DualTrace> {
    cfg.validate()?;
    let (r, m) = (cfg.r[0], cfg.m[0]);
    let l_max = *cfg.l.iter().max().expect("validated nonempty");
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
    let full = draw_instance(cfg.n, r, l_max, cfg.min_separation(), &mut rng)?;
    let omega = draw_omega(cfg.n, m, &mut rng)?;
    let mut curves = Vec::with_capacity(cfg.l.len());
    for &l in &cfg.l {
        let coeffs = ComplexMatrix::from_fn(r, l, |i, j| full.coeffs()[(i, j)]);
        let inst = synthesize(full.freqs().clone(), coeffs, cfg.n)?;
        let obs = sample(inst.signal(), &omega)?;
        let curve = match solve_primal(&obs, l, &cfg.solver) {
            Ok(sol) => {
                let (values, at_truth) =
                    dual_trace_values(&sol.dual_y, inst.freqs().as_slice(), cfg.grid_size)?;
                DualTraceCurve {
                    l,
                    converged: sol.converged,
                    nmse: nmse(&sol.x_hat, inst.signal())?,
                    iters: sol.iters,
                    error: (!sol.converged)
                        .then(|| "solver did not converge; trace uses the best iterate".into()),
                    values,
                    at_truth,
                }
            }
            Err(e) => DualTraceCurve {
                l,
                converged: false,
                nmse: f64::NAN,
                iters: 0,
                error: Some(e.to_string()),
                values: Vec::new(),
                at_truth: Vec::new(),
            },
        };
        curves.push(curve);
    }
    Ok(DualTrace {
        tool_version: super::record::TOOL_VERSION.to_string(),
        config: cfg.clone(),
        seed: instance_seed,
        omega,
        true_freqs: full.freqs().as_slice().to_vec(),
        grid_size: cfg.grid_size,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text).unwrap()
    }

    #[test]
    fn full_observation_always_succeeds() {
        let c = cfg("n = 16\nm = 16\nL = 1\nr = [2, 4]\ntrials = 5\nseed = 3\n");
        let rec = run_phase_transition(&c, 1).unwrap();
        assert_eq!(rec.rows.len(), 10);
        assert!(rec.aggregates.iter().all(|a| a.success_rate == 1.0));
    }

    #[test]
    fn phase_rejects_other_methods() {
        let c = cfg("n = 16\nm = 8\nL = 1\nr = 2\nmethods = [\"atomic\", \"cs_basis\"]\n");
        assert!(matches!(run_phase_transition(&c, 1), Err(Error::Config(_))));
        let c = cfg("n = 16\nm = 8\nL = 1\nr = 2\n");
        assert!(matches!(run_nmse_vs_m(&c, 1), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_pairs_instances_across_methods() {
        let c = cfg("n = 16\nm = [8, 12]\nL = 2\nr = 2\ntrials = 2\nmethods = [\"atomic\", \"cs_basis\", \"cs_frame_c2\"]\n");
        let rec = run_nmse_vs_m(&c, 1).unwrap();
        assert_eq!(rec.rows.len(), 2 * 2 * 3);
        for chunk in rec.rows.chunks(3) {
            assert!(chunk
                .iter()
                .all(|r| r.seed == chunk[0].seed && r.m == chunk[0].m));
        }
        // Same (instance, omega) regenerates identically for every method.
        let a = trial_problem(&c, experiment_id::SWEEP, 2, 2, 8, 1).unwrap();
        let b = trial_problem(&c, experiment_id::SWEEP, 2, 2, 8, 1).unwrap();
        assert_eq!(a.instance.signal(), b.instance.signal());
        assert_eq!(a.omega, b.omega);
    }

    #[test]
    fn workers_do_not_change_results() {
        let c = cfg("n = 16\nm = 10\nL = [1, 2]\nr = 2\ntrials = 3\nseed = 11\n");
        let strip = |rec: ExperimentRecord| -> Vec<TrialRow> {
            rec.rows
                .into_iter()
                .map(|mut r| {
                    r.wall_time_s = 0.0;
                    r
                })
                .collect()
        };
        assert_eq!(
            strip(run_phase_transition(&c, 1).unwrap()),
            strip(run_phase_transition(&c, 3).unwrap())
        );
    }

    #[test]
    fn fixed_omega_shares_pattern() {
        let c = cfg("n = 16\nm = 8\nL = 1\nr = 2\ntrials = 3\nfixed_omega = true\n");
        let a = trial_problem(&c, experiment_id::PHASE, 2, 1, 8, 0).unwrap();
        let b = trial_problem(&c, experiment_id::PHASE, 2, 1, 8, 2).unwrap();
        assert_eq!(a.omega, b.omega);
        assert_ne!(a.instance.freqs(), b.instance.freqs());
        let c = cfg("n = 16\nm = 8\nL = 1\nr = 2\ntrials = 3\n");
        let a = trial_problem(&c, experiment_id::PHASE, 2, 1, 8, 0).unwrap();
        let b = trial_problem(&c, experiment_id::PHASE, 2, 1, 8, 2).unwrap();
        assert_ne!(a.omega, b.omega);
    }

    #[test]
    fn zero_dual_gives_flat_trace() {
        let (values, at_truth) =
            dual_trace_values(&ComplexMatrix::zeros(8, 2), &[0.25], 64).unwrap();
        assert!(values.iter().all(|&v| v == 0.0));
        assert_eq!(at_truth, vec![0.0]);
    }

    #[test]
    fn dual_trace_shares_instance_across_l() {
        let c = cfg("n = 16\nm = 12\nL = [1, 2]\nr = 2\ngrid_size = 128\n");
        let tr = run_dual_trace(&c, 5).unwrap();
        assert_eq!(tr.curves.len(), 2);
        assert_eq!(tr.curve(1).unwrap().values.len(), 128);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * (128 + 2));
        assert!(text.lines().any(|l| l.starts_with("2,truth,")));
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff(&[], &[]), 0.0);
        assert!((hausdorff(&[0.1, 0.5], &[0.1]) - 0.4).abs() < 1e-15);
        assert!((hausdorff(&[0.99], &[0.01]) - 0.02).abs() < 1e-12);
    }
}
