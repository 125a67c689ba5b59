use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use atomic_mmv::baseline::{dft_frame, solve_group_mmv, GroupLassoParams, GroupLassoSolution};
use atomic_mmv::dual::{
    certify, localize_frequencies, prune_by_amplitude, CertificateReport, CertifyTolerances,
    DualPolynomial, DEFAULT_PEAK_TOL, DEFAULT_PRUNE_TOL,
};
use atomic_mmv::harness::{
    run_dual_trace, run_nmse_vs_m, run_phase_transition, ExperimentConfig, TOOL_VERSION,
};
use atomic_mmv::linalg::{vandermonde_decompose, DEFAULT_RANK_TOL};
use atomic_mmv::model::{draw_instance, draw_omega, nmse, sample, wrap_distance, SpectralInstance};
use atomic_mmv::sdp::{solve_primal, SdpSolution, SolverParams};
use atomic_mmv::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{BaselineArgs, CertifyArgs, Cli, Command, ProblemArgs, SynthArgs};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_IO: u8 = 4;
const EXIT_OTHER: u8 = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch(_)
            | Error::Infeasible(_)
            | Error::Json(_) => EXIT_CONFIG,
            Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
            Error::Io(_) | Error::Csv(_) => EXIT_IO,
            _ => EXIT_OTHER,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn out_path(cli: &Cli, name: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(&cli.out).map_err(|e| io_failure(&cli.out, e))?;
    Ok(cli.out.join(name))
}

fn write_json<T: Serialize>(cli: &Cli, name: &str, value: &T) -> CliResult<PathBuf> {
    let path = out_path(cli, name)?;
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))?;
    Ok(path)
}

fn write_with<F>(cli: &Cli, name: &str, f: F) -> CliResult<PathBuf>
where
    F: FnOnce(BufWriter<File>) -> atomic_mmv::Result<()>,
{
    let path = out_path(cli, name)?;
    let file = File::create(&path).map_err(|e| io_failure(&path, e))?;
    f(BufWriter::new(file)).map_err(|e| match e {
        Error::Io(io) => io_failure(&path, io),
        other => other.into(),
    })?;
    Ok(path)
}

/// Solver settings read from the `[solver]`, `[baseline]` and `[certify]`
/// tables of a config document. Other keys are ignored, so experiment configs
/// can be reused.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub baseline: GroupLassoParams,
    #[serde(default)]
    pub certify: CertifyTolerances,
}

fn load_solve_config(cli: &Cli) -> CliResult<SolveConfig> {
    let Some(path) = &cli.config else {
        return Ok(SolveConfig::default());
    };
    let text = read_text(path)?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let cfg: SolveConfig = if is_json {
        serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
    };
    cfg.solver
        .validate()
        .map_err(|e| Failure::config(format!("table `solver`: {e}")))?;
    cfg.baseline
        .validate()
        .map_err(|e| Failure::config(format!("table `baseline`: {e}")))?;
    Ok(cfg)
}

fn load_experiment(cli: &Cli) -> CliResult<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::config("this command needs --config <path>"))?;
    if !path.exists() {
        return Err(io_failure(path, "no such file"));
    }
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(io) => io_failure(path, io),
        Error::Config(msg) => Failure::config(format!("{}: {msg}", path.display())),
        other => other.into(),
    })?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.trace {
        cfg.solver.trace = true;
    }
    Ok(cfg)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Provenance<C> {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config: C,
}

fn provenance<C>(command: &str, config: C) -> Provenance<C> {
    Provenance {
        tool: "atomic-mmv".into(),
        tool_version: TOOL_VERSION.into(),
        command: command.into(),
        config,
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProblemEcho {
    pub instance: PathBuf,
    pub omega: Vec<usize>,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub settings: SolveConfig,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveArtifact {
    #[serde(flatten)]
    pub provenance: Provenance<ProblemEcho>,
    pub nmse: f64,
    pub solution: SdpSolution,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BaselineArtifact {
    #[serde(flatten)]
    pub provenance: Provenance<ProblemEcho>,
    pub oversampling: usize,
    pub nmse: f64,
    pub solution: GroupLassoSolution,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CertifyArtifact {
    #[serde(flatten)]
    pub provenance: Provenance<CertifyEcho>,
    pub report: CertificateReport,
    /// Local maxima of the dual polynomial modulus reaching the peak threshold.
    pub peaks: Vec<f64>,
    /// Peaks that keep a nonzero coefficient when the observed rows are refit on them.
    pub localized: Vec<f64>,
    pub vandermonde_freqs: Option<Vec<f64>>,
    pub vandermonde_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vandermonde_error: Option<String>,
    /// Largest distance between matched localized and Vandermonde frequencies.
    pub route_agreement: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CertifyEcho {
    pub instance: PathBuf,
    pub solution: PathBuf,
    pub tolerances: CertifyTolerances,
    pub peak_tol: f64,
    pub prune_tol: f64,
    pub rank_tol: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthEcho {
    pub n: usize,
    pub r: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub min_sep: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthArtifact {
    #[serde(flatten)]
    pub provenance: Provenance<SynthEcho>,
    pub instance: SpectralInstance,
}

pub fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Solve(a) => solve(cli, a),
        Command::Certify(a) => certify_cmd(cli, a),
        Command::Baseline(a) => baseline(cli, a),
        Command::Phase => phase(cli),
        Command::SweepM => sweep_m(cli),
        Command::Dualpoly => dualpoly(cli),
    }
}

fn synth(cli: &Cli, a: &SynthArgs) -> CliResult {
    let seed = cli.seed.unwrap_or(0);
    if a.n == 0 || a.r == 0 || a.l == 0 {
        return Err(Failure::config("--n, --r and --L must be at least 1"));
    }
    let min_sep = a.min_sep.unwrap_or(1.0 / a.n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = draw_instance(a.n, a.r, a.l, min_sep, &mut rng)?.with_seed(seed);
    let artifact = SynthArtifact {
        provenance: provenance(
            "synth",
            SynthEcho {
                n: a.n,
                r: a.r,
                l: a.l,
                min_sep,
                seed,
            },
        ),
        instance,
    };
    let path = write_json(cli, "instance.json", &artifact)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Reads an instance from either a bare instance document or a `synth` artifact.
fn load_instance(path: &Path) -> CliResult<SpectralInstance> {
    let value: serde_json::Value = read_json(path)?;
    let inner = value.get("instance").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn resolve_omega(cli: &Cli, p: &ProblemArgs, n: usize) -> CliResult<Vec<usize>> {
    match (&p.omega, p.m) {
        (Some(path), _) => {
            let mut omega: Vec<usize> = read_json(path)?;
            omega.sort_unstable();
            Ok(omega)
        }
        (None, Some(m)) => {
            if m == 0 || m > n {
                return Err(Failure::config(format!("--m must lie in 1..={n}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
            Ok(draw_omega(n, m, &mut rng)?)
        }
        (None, None) => Err(Failure::config("give either --omega <path> or --m <count>")),
    }
}

fn solve(cli: &Cli, a: &ProblemArgs) -> CliResult {
    let mut settings = load_solve_config(cli)?;
    if cli.trace {
        settings.solver.trace = true;
    }
    let instance = load_instance(&a.instance)?;
    let omega = resolve_omega(cli, a, instance.n())?;
    let obs = sample(instance.signal(), &omega)?;
    let solution = solve_primal(&obs, instance.num_signals(), &settings.solver)?;
    let err = nmse(&solution.x_hat, instance.signal())?;
    if cli.trace {
        let path = write_with(cli, "solve_trace.csv", |w| solution.write_trace_csv(w))?;
        println!("wrote {}", path.display());
    }
    let converged = solution.converged;
    if cli.verbose > 0 {
        eprintln!(
            "iters {} primal {:e} dual {:e} objective {:.12}",
            solution.iters, solution.primal_residual, solution.dual_residual, solution.objective
        );
    }
    let artifact = SolveArtifact {
        provenance: provenance(
            "solve",
            ProblemEcho {
                instance: a.instance.clone(),
                omega,
                seed: cli.seed,
                settings,
            },
        ),
        nmse: err,
        solution,
    };
    let path = write_json(cli, "solution.json", &artifact)?;
    println!("wrote {}", path.display());
    println!("nmse {err:.6e}");
    if !converged {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!(
                "solver stopped at the iteration cap ({})",
                artifact.solution.iters
            ),
        });
    }
    Ok(())
}

fn certify_cmd(cli: &Cli, a: &CertifyArgs) -> CliResult {
    let settings = load_solve_config(cli)?;
    let instance = load_instance(&a.instance)?;
    let art: SolveArtifact = read_json(&a.solution)?;
    let omega = art.provenance.config.omega.clone();
    let dp = DualPolynomial::new(art.solution.dual_y.clone());
    let report = certify(&dp, &instance, &omega, &settings.certify)?;
    let peaks = localize_frequencies(&dp, settings.certify.grid_size, DEFAULT_PEAK_TOL)?;
    let obs = sample(instance.signal(), &omega)?;
    let localized = prune_by_amplitude(&dp, &peaks, &obs, DEFAULT_PRUNE_TOL)?;
    let vd = vandermonde_decompose(&art.solution.u, DEFAULT_RANK_TOL);
    let (vf, vw, verr) = match &vd {
        Ok(v) => (
            Some(v.freqs.as_slice().to_vec()),
            Some(v.weights.clone()),
            None,
        ),
        Err(e) => (None, None, Some(e.to_string())),
    };
    let agreement = vf.as_ref().map(|vf| {
        let loc = localized.as_slice();
        let one_way = |x: &[f64], y: &[f64]| {
            x.iter()
                .map(|&p| {
                    y.iter()
                        .map(|&q| wrap_distance(p, q))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        };
        one_way(vf, loc).max(one_way(loc, vf))
    });
    println!(
        "certificate {} (max C1 {:.3e}, C2 margin {:.3e}, C3 {:.3e}); {} peaks, {} localized frequencies",
        if report.passed { "PASS" } else { "FAIL" },
        report.c1_residuals.iter().copied().fold(0.0, f64::max),
        report.c2_margin,
        report.c3_leakage,
        peaks.len(),
        localized.len()
    );
    let artifact = CertifyArtifact {
        provenance: provenance(
            "certify",
            CertifyEcho {
                instance: a.instance.clone(),
                solution: a.solution.clone(),
                tolerances: settings.certify,
                peak_tol: DEFAULT_PEAK_TOL,
                prune_tol: DEFAULT_PRUNE_TOL,
                rank_tol: DEFAULT_RANK_TOL,
            },
        ),
        report,
        peaks: peaks.as_slice().to_vec(),
        localized: localized.as_slice().to_vec(),
        vandermonde_freqs: vf,
        vandermonde_weights: vw,
        vandermonde_error: verr,
        route_agreement: agreement,
    };
    let path = write_json(cli, "certificate.json", &artifact)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn baseline(cli: &Cli, a: &BaselineArgs) -> CliResult {
    let settings = load_solve_config(cli)?;
    let instance = load_instance(&a.problem.instance)?;
    let omega = resolve_omega(cli, &a.problem, instance.n())?;
    let obs = sample(instance.signal(), &omega)?;
    let frame = dft_frame(instance.n(), a.c)?;
    let solution = solve_group_mmv(&frame, &obs, &settings.baseline)?;
    let err = nmse(&solution.x_hat, instance.signal())?;
    let converged = solution.converged;
    let iters = solution.iters;
    let artifact = BaselineArtifact {
        provenance: provenance(
            "baseline",
            ProblemEcho {
                instance: a.problem.instance.clone(),
                omega,
                seed: cli.seed,
                settings,
            },
        ),
        oversampling: a.c,
        nmse: err,
        solution,
    };
    let path = write_json(cli, "baseline.json", &artifact)?;
    println!("wrote {}", path.display());
    println!("nmse {err:.6e}");
    if !converged {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!("baseline stopped at the iteration cap ({iters})"),
        });
    }
    Ok(())
}

fn phase(cli: &Cli) -> CliResult {
    let cfg = load_experiment(cli)?;
    let rec = run_phase_transition(&cfg, cli.workers)?;
    let summary = write_json(cli, "phase_summary.json", &rec)?;
    let trials = write_with(cli, "phase_trials.csv", |w| rec.write_rows_csv(w))?;
    let rates = write_with(cli, "phase_rates.csv", |w| rec.write_aggregates_csv(w))?;
    for a in &rec.aggregates {
        println!(
            "r={:<3} L={:<2} m={:<3} success {}/{}",
            a.r, a.l, a.m, a.successes, a.trials
        );
    }
    for p in [summary, trials, rates] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn sweep_m(cli: &Cli) -> CliResult {
    let cfg = load_experiment(cli)?;
    let rec = run_nmse_vs_m(&cfg, cli.workers)?;
    let summary = write_json(cli, "sweep_summary.json", &rec)?;
    let trials = write_with(cli, "sweep_trials.csv", |w| rec.write_rows_csv(w))?;
    let curves = write_with(cli, "sweep_curves.csv", |w| rec.write_aggregates_csv(w))?;
    for a in &rec.aggregates {
        println!(
            "L={:<2} m={:<3} {:<12} median nmse {:.3e}",
            a.l,
            a.m,
            a.method.as_str(),
            a.median_nmse
        );
    }
    for p in [summary, trials, curves] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn dualpoly(cli: &Cli) -> CliResult {
    let cfg = load_experiment(cli)?;
    let trace = run_dual_trace(&cfg, cfg.seed)?;
    let meta = write_json(cli, "dualpoly.json", &trace)?;
    let csv = write_with(cli, "dualpoly.csv", |w| trace.write_csv(w))?;
    for c in &trace.curves {
        let off_max = c.values.iter().copied().fold(0.0, f64::max);
        println!(
            "L={:<2} converged={} nmse {:.3e} max |Q| {:.6}",
            c.l, c.converged, c.nmse, off_max
        );
        if let Some(e) = &c.error {
            eprintln!("L={}: {e}", c.l);
        }
    }
    for p in [meta, csv] {
        println!("wrote {}", p.display());
    }
    Ok(())
}
