use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::PruningMode;
use crate::nn::ExponentialDecay;
use crate::{Error, Result};

/// Which branches of the network are active.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Competition and evolution modules.
    #[default]
    Full,
    /// Competition module only (evolution state zeroed).
    #[serde(rename = "gme-c")]
    GmeC,
    /// Evolution module only (competition state zeroed, no auxiliary loss).
    #[serde(rename = "gme-h")]
    GmeH,
    /// Evolution without the tree: one aggregation over all history.
    NoTree,
    /// Evolution only, without the tree.
    #[serde(rename = "gme-h-no-tree")]
    GmeHNoTree,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::GmeC,
        Ablation::GmeH,
        Ablation::NoTree,
        Ablation::GmeHNoTree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::GmeC => "gme-c",
            Ablation::GmeH => "gme-h",
            Ablation::NoTree => "no-tree",
            Ablation::GmeHNoTree => "gme-h-no-tree",
        }
    }

    pub fn uses_competition(self) -> bool {
        !matches!(self, Ablation::GmeH | Ablation::GmeHNoTree)
    }

    pub fn uses_evolution(self) -> bool {
        self != Ablation::GmeC
    }

    pub fn uses_tree(self) -> bool {
        matches!(self, Ablation::Full | Ablation::GmeH)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown ablation {s:?}")))
    }
}

/// Training hyperparameters. Defaults follow the published settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the target loss against the competitor auxiliary loss.
    pub eta: f64,
    /// History length in days, also the number of tree unroll steps.
    pub t_h: u32,
    pub hidden: usize,
    /// Dropout keep probability after the gated update.
    pub keep: f64,
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_steps: u64,
    pub epochs: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub pruning: PruningMode,
    /// Let the target's own content state join the attention as a self-edge.
    pub self_edge: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 0.7,
            t_h: 5,
            hidden: 50,
            keep: 0.9,
            lr0: 0.02,
            decay_rate: 0.95,
            decay_steps: 100,
            epochs: 20,
            seed: 0,
            ablation: Ablation::Full,
            pruning: PruningMode::CateJf,
            self_edge: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(what.to_string()));
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1]");
        }
        if !(1..=crate::market::MAX_HISTORY_DAYS).contains(&self.t_h) {
            return bad("t_h must lie in 1..=7");
        }
        if self.hidden == 0 {
            return bad("hidden size must be positive");
        }
        if !(self.keep > 0.0 && self.keep <= 1.0) {
            return bad("keep must lie in (0, 1]");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) || self.decay_steps == 0 {
            return bad("decay rate must lie in (0, 1] with positive decay steps");
        }
        Ok(())
    }

    pub fn schedule(&self) -> ExponentialDecay {
        ExponentialDecay {
            lr0: self.lr0,
            rate: self.decay_rate,
            steps: self.decay_steps,
            staircase: true,
        }
    }
}
