use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::scheme::{Mode, Regime, DEFAULT_N_MAX_FACTOR};

pub const MIN_TRIALS: u64 = 100;
/// Largest message set a rate-coupled point may allocate.
pub const DEFAULT_MAX_MESSAGES: usize = 1 << 20;
pub const DEFAULT_TOL_REL: f64 = 0.01;

/// Backoff `ρ_N` as a function of `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoFamily {
    /// `ρ_N = N^(−s)`.
    PowerLaw { s: f64 },
    Constant { c: f64 },
}

impl RhoFamily {
    pub fn at(&self, n: f64) -> f64 {
        match *self {
            RhoFamily::PowerLaw { s } => n.powf(-s),
            RhoFamily::Constant { c } => c,
        }
    }

    /// `s ∈ [1/2, 1)` meets `ρ_N → 0` but not `ρ_N·√N → ∞`.
    pub fn relaxed(&self) -> bool {
        matches!(*self, RhoFamily::PowerLaw { s } if s >= 0.5)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        match *self {
            RhoFamily::PowerLaw { s } if !(s > 0.0 && s < 1.0) => {
                Err(HarnessError::Config(format!("power-law exponent s = {s} outside (0, 1)")))
            }
            RhoFamily::Constant { c } if !(c > 0.0 && c.is_finite()) => {
                Err(HarnessError::Config(format!("constant backoff c = {c} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Parses `pow:0.333` or `const:0.1`.
impl FromStr for RhoFamily {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("rho family '{s}': expected pow:<s> or const:<c>"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        let family = match kind.trim() {
            "pow" | "power" => RhoFamily::PowerLaw { s: value },
            "const" | "constant" => RhoFamily::Constant { c: value },
            _ => return Err(bad()),
        };
        family.validate()?;
        Ok(family)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub channel_path: PathBuf,
    pub n_grid: Vec<f64>,
    pub rho_family: RhoFamily,
    pub mode: Mode,
    #[serde(default)]
    pub const_q: f64,
    pub trials: u64,
    pub seed: u64,
    #[serde(default = "default_n_max_factor")]
    pub n_max_factor: f64,
    /// Fixed message count (small-M mode); `None` couples `M` to the rate.
    #[serde(default)]
    pub messages: Option<usize>,
    #[serde(default)]
    pub regime: Option<Regime>,
    /// Case-1 phase-1 threshold override.
    #[serde(default)]
    pub p0: Option<f64>,
    #[serde(default = "default_tol_rel")]
    pub tol_rel: f64,
    #[serde(default = "default_max_messages")]
    pub max_messages: usize,
    /// Not part of the config hash.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    /// Not part of the config hash.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_n_max_factor() -> f64 {
    DEFAULT_N_MAX_FACTOR
}
fn default_tol_rel() -> f64 {
    DEFAULT_TOL_REL
}
fn default_max_messages() -> usize {
    DEFAULT_MAX_MESSAGES
}
fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

impl CampaignConfig {
    /// Defaults for everything but the essentials.
    pub fn new(channel_path: impl Into<PathBuf>, n_grid: Vec<f64>, rho_family: RhoFamily, trials: u64, seed: u64) -> Self {
        Self {
            channel_path: channel_path.into(),
            n_grid,
            rho_family,
            mode: Mode::Calibrated,
            const_q: 0.0,
            trials,
            seed,
            n_max_factor: DEFAULT_N_MAX_FACTOR,
            messages: None,
            regime: None,
            p0: None,
            tol_rel: DEFAULT_TOL_REL,
            max_messages: DEFAULT_MAX_MESSAGES,
            output: None,
            format: OutputFormat::Csv,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.trials < MIN_TRIALS {
            return bad(format!("trials = {} below the minimum {MIN_TRIALS}", self.trials));
        }
        if self.n_grid.is_empty() {
            return bad("N grid is empty".into());
        }
        if let Some(n) = self.n_grid.iter().find(|n| !(n.is_finite() && **n > 0.0)) {
            return bad(format!("N = {n} must be positive"));
        }
        self.rho_family.validate()?;
        if !(self.n_max_factor >= 1.0) {
            return bad(format!("n_max multiplier {} must be at least 1", self.n_max_factor));
        }
        if !(self.tol_rel > 0.0 && self.tol_rel < 1.0) {
            return bad(format!("tol_rel {} outside (0, 1)", self.tol_rel));
        }
        if matches!(self.messages, Some(m) if m < 2) {
            return bad("fixed M must be at least 2".into());
        }
        if self.threads == Some(0) {
            return bad("thread count must be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the settings that determine the results.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = None;
        canonical.threads = None;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}
