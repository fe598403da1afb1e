//! Run configuration: a versioned JSON document describing the market, the
//! objective, seeds, replication counts and sweep grids.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pricing::DEFAULT_ENUMERATION_CAP;
use crate::quadrature::DEFAULT_NODES;
use crate::simulation::{DeviationGrid, MuGrid};
use crate::valuations::{Buyer, MarketConfig, Valuation};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Welfare,
    Profit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
    pub valuation: Valuation,
}

fn default_reps() -> usize {
    100_000
}
fn default_nodes() -> usize {
    DEFAULT_NODES
}
fn default_cap() -> u128 {
    DEFAULT_ENUMERATION_CAP
}
fn default_welfare_reps() -> usize {
    1_000
}
fn default_bb_rounds() -> usize {
    10_000
}

/// On-disk schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub sigma2: f64,
    pub costs: Vec<f64>,
    pub buyers: Vec<BuyerEntry>,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub seed: u64,
    /// True mean used by `run`; the mechanism never sees it.
    #[serde(default)]
    pub mu: f64,
    /// Monte Carlo replications for utility and price estimates.
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Rounds for the adversarial budget-balance probe.
    #[serde(default = "default_bb_rounds")]
    pub bb_rounds: usize,
    /// Replications per grid point when simulating deviation welfare.
    #[serde(default = "default_welfare_reps")]
    pub welfare_reps: usize,
    #[serde(default)]
    pub mu_grid: MuGrid,
    #[serde(default)]
    pub deviations: DeviationGrid,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    /// Largest allocation space the exact pricing solver will enumerate.
    #[serde(default = "default_cap")]
    pub max_enumeration: u128,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Off-path residuals are reported either way; this only records who is
    /// assumed to cover them.
    #[serde(default)]
    pub broker_absorbs_residual: bool,
}

/// A validated configuration together with the digest of its source bytes.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub market: MarketConfig,
    pub sha256: String,
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn from_file(mut file: ConfigFile, sha256: String) -> Result<Self> {
        let mut warnings = Vec::new();
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    file.schema_version
                ),
            ));
        }
        if file.costs.iter().any(|c| c.is_nan()) {
            return Err(Error::config("costs", "costs must be numbers"));
        }
        if file.costs.windows(2).any(|w| w[1] < w[0]) {
            file.costs.sort_by(f64::total_cmp);
            let msg = format!("costs were not sorted; using {:?}", file.costs);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        if !file.mu.is_finite() {
            return Err(Error::config("mu", "must be finite"));
        }
        if file.reps == 0 {
            return Err(Error::config("reps", "must be >= 1"));
        }
        if file.bb_rounds == 0 {
            return Err(Error::config("bb_rounds", "must be >= 1"));
        }
        if file.welfare_reps == 0 {
            return Err(Error::config("welfare_reps", "must be >= 1"));
        }
        if file.quadrature_nodes == 0 {
            return Err(Error::config("quadrature_nodes", "must be >= 1"));
        }
        if !(file.epsilon >= 0.0 && file.epsilon.is_finite()) {
            return Err(Error::config("epsilon", "must be finite and >= 0"));
        }
        file.mu_grid.validate()?;
        file.deviations.validate()?;
        let buyers = file
            .buyers
            .iter()
            .enumerate()
            .map(|(k, b)| Buyer {
                id: b.id.unwrap_or(k),
                valuation: b.valuation.clone(),
            })
            .collect();
        let market = MarketConfig::new(buyers, file.costs.clone(), file.sigma2)?;
        Ok(RunConfig {
            file,
            market,
            sha256,
            warnings,
        })
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        Self::from_file(file, hex::encode(Sha256::digest(text.as_bytes())))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::parse(&text, path)
}
