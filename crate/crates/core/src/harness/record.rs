use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Columns that depend on scheduling and are excluded from reproducibility checks.
pub const TIMING_COLUMNS: &[&str] = &["wall_time_s"];

/// Certification and extraction diagnostics for a successful atomic trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCertificate {
    pub passed: bool,
    pub max_c1_residual: f64,
    pub c2_margin: f64,
    /// Largest `||Q(f)||_2` over the grid with refinement.
    pub sup_norm: f64,
    /// Off-support row norm of `Y` before zeroing, relative to `||Y||_F`.
    pub leakage_rel: f64,
    pub duality_gap: f64,
    /// Local maxima of `||Q||_2` reaching the peak threshold.
    pub peaks: usize,
    /// Peaks kept after the amplitude refit.
    pub localized: usize,
    /// Largest distance from a true frequency to the nearest localized one.
    pub localization_error: f64,
    /// Hausdorff distance between localized and Vandermonde frequencies;
    /// `None` when the decomposition failed.
    pub route_agreement: Option<f64>,
    pub vandermonde_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub r: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub m: usize,
    pub method: Method,
    pub nmse: f64,
    pub success: bool,
    pub iters: usize,
    pub converged: bool,
    pub objective: f64,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<TrialCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub r: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub m: usize,
    pub method: Method,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median_nmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Groups rows by `(r, L, m, method)` in sorted key order.
pub fn aggregate(rows: &[TrialRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, usize, usize, Method), Vec<&TrialRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.r, row.l, row.m, row.method))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|((r, l, m, method), g)| {
            let successes = g.iter().filter(|row| row.success).count();
            let mut nmses: Vec<f64> = g.iter().map(|row| row.nmse).collect();
            AggregateRow {
                r,
                l,
                m,
                method,
                trials: g.len(),
                successes,
                success_rate: successes as f64 / g.len() as f64,
                median_nmse: median(&mut nmses),
            }
        })
        .collect()
}

/// Full-precision rendering used in every numeric output column.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

const CSV_HEADER: &[&str] = &[
    "trial",
    "seed",
    "r",
    "L",
    "m",
    "method",
    "nmse",
    "success",
    "iters",
    "converged",
    "objective",
    "wall_time_s",
    "cert_passed",
    "max_c1_residual",
    "c2_margin",
    "sup_norm",
    "leakage_rel",
    "duality_gap",
    "peaks",
    "localized",
    "localization_error",
    "route_agreement",
    "vandermonde_count",
];

impl ExperimentRecord {
    pub fn new(experiment: &str, config: ExperimentConfig, rows: Vec<TrialRow>) -> Self {
        let aggregates = aggregate(&rows);
        Self {
            experiment: experiment.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config,
            rows,
            aggregates,
        }
    }

    pub fn aggregate_for(
        &self,
        r: usize,
        l: usize,
        m: usize,
        method: Method,
    ) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.r == r && a.l == l && a.m == m && a.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a summary and checks that its aggregates match its rows.
    pub fn from_json(text: &str) -> Result<Self> {
        let rec: Self = serde_json::from_str(text)?;
        let recomputed = aggregate(&rec.rows);
        if !aggregates_match(&recomputed, &rec.aggregates) {
            return Err(Error::InvalidArgument(
                "stored aggregates disagree with the per-trial rows".into(),
            ));
        }
        for row in &rec.rows {
            if row.success != (row.nmse <= rec.config.success_nmse) {
                return Err(Error::InvalidArgument(format!(
                    "trial {} has a success flag inconsistent with its NMSE",
                    row.trial
                )));
            }
        }
        Ok(rec)
    }

    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            let c = row.certificate.as_ref();
            w.write_record([
                row.trial.to_string(),
                row.seed.to_string(),
                row.r.to_string(),
                row.l.to_string(),
                row.m.to_string(),
                row.method.to_string(),
                fmt_f64(row.nmse),
                row.success.to_string(),
                row.iters.to_string(),
                row.converged.to_string(),
                fmt_f64(row.objective),
                fmt_f64(row.wall_time_s),
                opt(c.map(|c| c.passed)),
                opt_f64(c.map(|c| c.max_c1_residual)),
                opt_f64(c.map(|c| c.c2_margin)),
                opt_f64(c.map(|c| c.sup_norm)),
                opt_f64(c.map(|c| c.leakage_rel)),
                opt_f64(c.map(|c| c.duality_gap)),
                opt(c.map(|c| c.peaks)),
                opt(c.map(|c| c.localized)),
                opt_f64(c.map(|c| c.localization_error)),
                opt_f64(c.and_then(|c| c.route_agreement)),
                opt(c.and_then(|c| c.vandermonde_count)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "r",
            "L",
            "m",
            "method",
            "trials",
            "successes",
            "success_rate",
            "median_nmse",
        ])?;
        for a in &self.aggregates {
            w.write_record([
                a.r.to_string(),
                a.l.to_string(),
                a.m.to_string(),
                a.method.to_string(),
                a.trials.to_string(),
                a.successes.to_string(),
                fmt_f64(a.success_rate),
                fmt_f64(a.median_nmse),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn aggregates_match(a: &[AggregateRow], b: &[AggregateRow]) -> bool {
    let same = |x: f64, y: f64| x == y || (x.is_nan() && y.is_nan());
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            (x.r, x.l, x.m, x.method, x.trials, x.successes)
                == (y.r, y.l, y.m, y.method, y.trials, y.successes)
                && same(x.success_rate, y.success_rate)
                && same(x.median_nmse, y.median_nmse)
        })
}

/// Reads a per-trial CSV and drops the timing columns, for reproducibility comparisons.
pub fn csv_rows_without_timing<R: Read>(input: R) -> Result<Vec<Vec<String>>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    let keep: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| !TIMING_COLUMNS.contains(h))
        .map(|(i, _)| i)
        .collect();
    let mut out = vec![keep.iter().map(|&i| header[i].to_string()).collect()];
    for rec in rd.records() {
        let rec = rec?;
        out.push(keep.iter().map(|&i| rec[i].to_string()).collect());
    }
    Ok(out)
}
