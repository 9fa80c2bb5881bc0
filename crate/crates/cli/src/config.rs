//! The JSON run configuration. Every section is optional; commands check for
//! the sections they need. Paths inside the file are resolved against the
//! directory holding it.

use std::path::{Path, PathBuf};

use clockfcs::fcs::Theorem1Check;
use clockfcs::io::{FamilyFile, ModelFile, PolicyFile, Source};
use clockfcs::sweep::{Axis, CompareConfig, Objective, RefineOptions};
use clockfcs::trajectory::DEFAULT_TRAJECTORIES;
use clockfcs::{Error, IntegratedCurrent, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Snr,
    Bounds,
    Sweep,
    Optimize,
    Simulate,
    VerifyTheorem1,
    Compare,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub model: Option<Source<ModelFile>>,
    pub families: Option<Vec<Source<FamilyFile>>>,
    pub policy: Option<Source<PolicyFile>>,
    pub current: Option<Source<CurrentFile>>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub refine: RefineOptions,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub theorem1: Theorem1Check,
    pub compare: Option<CompareSection>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    #[serde(skip)]
    pub base: PathBuf,
}

/// `{"total_count": true}` or `{"weights": [{"label": {"a": 1, "j": 0}, "w": 1.0}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurrentFile {
    TotalCount { total_count: bool },
    Weights { weights: IntegratedCurrent },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub objective: Objective,
    pub axes: Vec<Axis>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Defaults to 500 over the median escape rate.
    pub horizon: Option<f64>,
    pub trajectories: usize,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { horizon: None, trajectories: DEFAULT_TRAJECTORIES, seed: 0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompareSection {
    Quantum {
        #[serde(flatten)]
        config: CompareConfig,
    },
    Classical {
        rate_range: [f64; 2],
        start: Vec<f64>,
    },
}

pub fn require<'a, T>(field: &'a Option<T>, name: &str) -> Result<&'a T> {
    field.as_ref().ok_or_else(|| Error::Parse(format!("config needs a `{name}` section")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = clockfcs::io::read_json(path)?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }
}
