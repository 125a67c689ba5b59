mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Joint off-the-grid frequency recovery for multiple measurement vectors.
#[derive(Debug, Parser)]
#[command(name = "atomic-mmv", version, about)]
struct Cli {
    /// Output directory for artifacts (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for experiment suites.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Configuration document (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write per-iteration solver residuals as CSV.
    #[arg(long, global = true)]
    trace: bool,
    /// Print more diagnostics to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random separated instance.
    Synth(SynthArgs),
    /// Recover an instance from a subset of its rows with the atomic-norm SDP.
    Solve(ProblemArgs),
    /// Check a solution's dual certificate and extract frequencies two ways.
    Certify(CertifyArgs),
    /// Recover an instance with the grid-based group-sparse baseline.
    Baseline(BaselineArgs),
    /// Success rate against sparsity level and number of signals.
    Phase,
    /// Reconstruction error against the number of samples, across methods.
    SweepM,
    /// Dual polynomial modulus over a grid for one instance.
    Dualpoly,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    #[arg(long = "L", default_value_t = 1)]
    l: usize,
    /// Minimum wrap-around separation; defaults to 1/n.
    #[arg(long)]
    min_sep: Option<f64>,
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Instance JSON written by `synth`.
    #[arg(long)]
    instance: PathBuf,
    /// JSON array of sampled row indices.
    #[arg(long, conflicts_with = "m")]
    omega: Option<PathBuf>,
    /// Number of rows to sample uniformly (uses --seed).
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Solution JSON written by `solve`.
    #[arg(long)]
    solution: PathBuf,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Frame oversampling factor (1 for the DFT basis).
    #[arg(long, default_value_t = 2)]
    c: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
