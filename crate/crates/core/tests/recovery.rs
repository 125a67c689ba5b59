use atomic_mmv::dual::{
    certify, localize_frequencies, prune_by_amplitude, CertifyTolerances, DualPolynomial,
};
use atomic_mmv::harness::{run_phase_transition, ExperimentConfig, ExperimentRecord};
use atomic_mmv::linalg::{vandermonde_decompose, DEFAULT_RANK_TOL};
use atomic_mmv::model::{draw_instance, draw_omega, nmse, sample, wrap_distance};
use atomic_mmv::sdp::{objective_upper_bound, solve_primal, SolverParams, DUALITY_GAP_TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn nearest(f: f64, set: &[f64]) -> f64 {
    set.iter()
        .map(|&g| wrap_distance(f, g))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn ten_frequencies_three_signals_half_the_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inst = draw_instance(64, 10, 3, 1.0 / 64.0, &mut rng).unwrap();
    let omega = draw_omega(64, 32, &mut rng).unwrap();
    let obs = sample(inst.signal(), &omega).unwrap();
    let sol = solve_primal(&obs, 3, &SolverParams::default()).unwrap();

    assert!(sol.converged);
    let err = nmse(&sol.x_hat, inst.signal()).unwrap();
    assert!(err <= 1e-5, "nmse {err}");
    let dual = sol.dual.as_ref().unwrap();
    assert!(
        dual.relative_gap <= DUALITY_GAP_TOL,
        "gap {}",
        dual.relative_gap
    );
    assert!(sol.block_min_eig_ratio >= -1e-7);

    let dp = DualPolynomial::new(sol.dual_y.clone());
    let rep = certify(&dp, &inst, &omega, &CertifyTolerances::default()).unwrap();
    assert!(rep.passed, "{rep:?}");
    let peaks = localize_frequencies(&dp, 8192, 1e-3).unwrap();
    let loc = prune_by_amplitude(&dp, &peaks, &obs, 1e-4).unwrap();
    assert_eq!(loc.len(), 10);
    for &f in inst.freqs().as_slice() {
        assert!(nearest(f, loc.as_slice()) <= 1e-4);
    }
    let vd = vandermonde_decompose(&sol.u, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(vd.freqs.len(), 10);
    for &f in inst.freqs().as_slice() {
        assert!(nearest(f, vd.freqs.as_slice()) <= 1e-4);
    }
}

#[test]
fn observed_rows_are_reproduced_for_one_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inst = draw_instance(32, 5, 1, 1.0 / 32.0, &mut rng).unwrap();
    let omega = draw_omega(32, 12, &mut rng).unwrap();
    let obs = sample(inst.signal(), &omega).unwrap();
    let sol = solve_primal(&obs, 1, &SolverParams::default()).unwrap();
    let fitted = sol.x_hat.select_rows(&omega).unwrap();
    assert!(fitted.max_abs_diff(obs.observed()).unwrap() <= 1e-12);
}

#[test]
fn objective_never_exceeds_the_explicit_decomposition() {
    // Recovered or not, the true decomposition is feasible, so it bounds the optimum.
    let params = SolverParams::default();
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let r = 3 + 3 * seed as usize;
        let inst = draw_instance(32, r, 2, 1.0 / 32.0, &mut rng).unwrap();
        let omega = draw_omega(32, 10, &mut rng).unwrap();
        let sol = solve_primal(&sample(inst.signal(), &omega).unwrap(), 2, &params).unwrap();
        let bound = objective_upper_bound(&inst);
        assert!(
            sol.objective <= bound * (1.0 + 1e-6),
            "seed {seed}: {} > {bound}",
            sol.objective
        );
    }
}

#[test]
fn phase_records_are_reproducible_and_round_trip() {
    let cfg = ExperimentConfig::from_toml_str(
        "n = 16\nm = 8\nL = [1, 2]\nr = [1, 2]\ntrials = 2\nseed = 5\ncertify = true\n",
    )
    .unwrap();
    let a = run_phase_transition(&cfg, 1).unwrap();
    let b = run_phase_transition(&cfg, 2).unwrap();
    assert_eq!(a.rows.len(), 8);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(
            (x.seed, x.nmse.to_bits(), x.iters),
            (y.seed, y.nmse.to_bits(), y.iters)
        );
    }
    let back = ExperimentRecord::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
}
