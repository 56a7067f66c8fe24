//! Layered configuration: built-in defaults, then an optional TOML file,
//! then command-line flags.

use std::path::Path;

use curemix::{EffectsConfig, SamplerConfig, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Link choice as written in files and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Linear,
    Nn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub link: LinkKind,
    /// Hidden-layer width for the neural-net link.
    pub k: usize,
    /// Fixed per-arm component counts; empty selects them by BIC.
    pub m_per_group: Vec<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            link: LinkKind::Linear,
            k: 4,
            m_per_group: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectOptions {
    pub grid: Vec<usize>,
    pub test_fraction: f64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            grid: vec![4, 6, 8, 13, 18],
            test_fraction: 0.33,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateOptions {
    pub reps: usize,
    /// Held-out share recorded with every replication.
    pub test_fraction: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            reps: 1,
            test_fraction: 0.33,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    /// One-based (group, reference) pairs.
    pub pairs: Vec<[usize; 2]>,
    pub thresholds: Vec<f64>,
    /// Time grid of the survival-curve table.
    pub times: Vec<f64>,
    pub measures: Vec<curemix::Measure>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            pairs: vec![[2, 1], [3, 1], [3, 2]],
            thresholds: (0..=8).map(|i| i as f64 * 0.05).collect(),
            times: (1..=20).map(|i| i as f64 * 0.25).collect(),
            measures: vec![curemix::Measure::Rmst, curemix::Measure::SurvivalProb],
        }
    }
}

/// Everything a config file may set. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub sampler: SamplerConfig,
    pub fit: FitOptions,
    pub select: SelectOptions,
    pub sim: SimConfig,
    pub simulate: SimulateOptions,
    pub effects: EffectsConfig,
    pub report: ReportOptions,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
