use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::baseline::GroupLassoParams;
use crate::dual::DEFAULT_GRID_SIZE;
use crate::error::{Error, Result};
use crate::sdp::SolverParams;

pub const DEFAULT_SUCCESS_NMSE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Atomic,
    CsBasis,
    CsFrameC2,
    CsFrameC4,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Atomic,
        Method::CsBasis,
        Method::CsFrameC2,
        Method::CsFrameC4,
    ];

    /// Frame oversampling factor, or `None` for the gridless method.
    pub fn oversampling(self) -> Option<usize> {
        match self {
            Method::Atomic => None,
            Method::CsBasis => Some(1),
            Method::CsFrameC2 => Some(2),
            Method::CsFrameC4 => Some(4),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Atomic => "atomic",
            Method::CsBasis => "cs_basis",
            Method::CsFrameC2 => "cs_frame_c2",
            Method::CsFrameC4 => "cs_frame_c4",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Accepts either a scalar or a list.
fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

fn default_trials() -> usize {
    1
}

fn default_success() -> f64 {
    DEFAULT_SUCCESS_NMSE
}

fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}

fn default_methods() -> Vec<Method> {
    vec![Method::Atomic]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub m: Vec<usize>,
    #[serde(rename = "L", deserialize_with = "one_or_many")]
    pub l: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub r: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Minimum wrap-around separation; `1/n` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_sep: Option<f64>,
    #[serde(default = "default_success")]
    pub success_nmse: f64,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub baseline: GroupLassoParams,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Reuse one sampling pattern for every trial at a given `m`.
    #[serde(default)]
    pub fixed_omega: bool,
    /// Run dual certification and frequency extraction on successful atomic trials.
    #[serde(default)]
    pub certify: bool,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| config_err(format!("{e} (line {}, column {})", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads JSON when the extension is `.json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn min_separation(&self) -> f64 {
        self.min_sep.unwrap_or(1.0 / self.n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config_err("field `n`: must be at least 1"));
        }
        if self.trials == 0 {
            return Err(config_err("field `trials`: must be at least 1"));
        }
        for (field, vals) in [("m", &self.m), ("L", &self.l), ("r", &self.r)] {
            if vals.is_empty() {
                return Err(config_err(format!(
                    "field `{field}`: needs at least one value"
                )));
            }
            if vals.contains(&0) {
                return Err(config_err(format!(
                    "field `{field}`: values must be at least 1"
                )));
            }
        }
        if let Some(&m) = self.m.iter().find(|&&m| m > self.n) {
            return Err(config_err(format!("field `m`: {m} exceeds n = {}", self.n)));
        }
        let sep = self.min_separation();
        if !(sep > 0.0 && sep < 1.0) {
            return Err(config_err("field `min_sep`: must lie in (0, 1)"));
        }
        for &r in &self.r {
            if r > self.n {
                return Err(config_err(format!("field `r`: {r} exceeds n = {}", self.n)));
            }
            if r as f64 * sep >= 1.0 {
                return Err(config_err(format!(
                    "field `r`: {r} frequencies cannot be separated by {sep} on the unit circle"
                )));
            }
        }
        if !(self.success_nmse > 0.0) {
            return Err(config_err("field `success_nmse`: must be positive"));
        }
        if self.grid_size < 4 * self.n {
            return Err(config_err(format!(
                "field `grid_size`: {} is below 4n = {}",
                self.grid_size,
                4 * self.n
            )));
        }
        if self.methods.is_empty() {
            return Err(config_err("field `methods`: needs at least one method"));
        }
        self.solver
            .validate()
            .map_err(|e| config_err(format!("table `solver`: {e}")))?;
        self.baseline
            .validate()
            .map_err(|e| config_err(format!("table `baseline`: {e}")))?;
        Ok(())
    }
}
