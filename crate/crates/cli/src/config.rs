use std::path::{Path, PathBuf};

use gme_core::eval::Variant;
use gme_core::graph::PruningMode;
use gme_core::market::SplitRatio;
use gme_core::model::TrainConfig;
use gme_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Settings of the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub variants: Vec<Variant>,
    pub t_h: Vec<u32>,
    pub pruning: Vec<PruningMode>,
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            variants: Vec::new(),
            t_h: Vec::new(),
            pruning: Vec::new(),
            jobs: 1,
        }
    }
}

/// Everything a run needs besides the command itself. Loaded from TOML;
/// command-line flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    /// Offset of the market's local time from UTC, in seconds.
    pub utc_offset_secs: i32,
    pub split: SplitRatio,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            utc_offset_secs: 0,
            split: SplitRatio::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())).into())
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}
