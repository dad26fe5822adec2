use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::market::{MarketWindow, ProjectCatalog, DAY};
use crate::Error;

/// Competitors launched at most this long before the reference time sit in
/// the platform's "just funded" listing.
pub const JUST_FUNDED_WINDOW: i64 = 3 * DAY;

/// Which running projects may compete with a target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruningMode {
    /// Every running project competes with every target.
    Unpruned,
    /// Same category only.
    OnlyCate,
    /// Launched within the just-funded window only.
    OnlyJf,
    /// Union of the category and just-funded rules.
    #[default]
    CateJf,
}

impl PruningMode {
    pub const ALL: [PruningMode; 4] = [
        PruningMode::Unpruned,
        PruningMode::OnlyCate,
        PruningMode::OnlyJf,
        PruningMode::CateJf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PruningMode::Unpruned => "unpruned",
            PruningMode::OnlyCate => "only-cate",
            PruningMode::OnlyJf => "only-jf",
            PruningMode::CateJf => "cate-jf",
        }
    }
}

impl fmt::Display for PruningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PruningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PruningMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown pruning mode {s:?}")))
    }
}

/// Binary adjacency from running projects (columns) to targets (rows).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompetitionGraph {
    pub targets: Vec<String>,
    pub competitors: Vec<String>,
    adjacency: Vec<bool>,
    mapping: HashMap<String, usize>,
}

impl CompetitionGraph {
    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn n_competitors(&self) -> usize {
        self.competitors.len()
    }

    pub fn edge(&self, target: usize, competitor: usize) -> bool {
        self.adjacency[target * self.competitors.len() + competitor]
    }

    /// Row-major `targets x competitors` adjacency.
    pub fn adjacency(&self) -> &[bool] {
        &self.adjacency
    }

    /// Column index of a competitor id.
    pub fn column(&self, id: &str) -> Option<usize> {
        self.mapping.get(id).copied()
    }

    /// Competitor columns connected to `target`.
    pub fn neighbors(&self, target: usize) -> Vec<usize> {
        (0..self.competitors.len())
            .filter(|&j| self.edge(target, j))
            .collect()
    }

    /// Competitor columns connected to at least one target.
    pub fn active_competitors(&self) -> Vec<usize> {
        (0..self.competitors.len())
            .filter(|&j| (0..self.targets.len()).any(|g| self.edge(g, j)))
            .collect()
    }
}

/// Builds the target x competitor adjacency under a pruning mode. The
/// just-funded rule is measured from the window's frozen reference time.
pub fn build_competition_graph(
    window: &MarketWindow,
    catalog: &ProjectCatalog,
    mode: PruningMode,
) -> CompetitionGraph {
    let t_ref = window.reference_time();
    let targets = window.targets().to_vec();
    let competitors = window.running_ids.clone();
    let mut adjacency = Vec::with_capacity(targets.len() * competitors.len());
    for g in &targets {
        let target = catalog.expect(g);
        for j in &competitors {
            let comp = catalog.expect(j);
            let same_category = comp.category == target.category;
            let just_funded = t_ref - comp.launch_time <= JUST_FUNDED_WINDOW;
            adjacency.push(match mode {
                PruningMode::Unpruned => true,
                PruningMode::OnlyCate => same_category,
                PruningMode::OnlyJf => just_funded,
                PruningMode::CateJf => same_category || just_funded,
            });
        }
    }
    let mapping = competitors
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    CompetitionGraph {
        targets,
        competitors,
        adjacency,
        mapping,
    }
}
