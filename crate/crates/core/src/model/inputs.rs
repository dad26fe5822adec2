use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::features::{compute_label, early_funding, hourly_series, Encoder, SERIES_LEN};
use crate::graph::{build_competition_graph, build_propagation_tree, PruningMode};
use crate::market::{AccessScope, InvestmentLog, MarketWindow, ProjectCatalog, DAY};
use crate::nn::Tensor;
use crate::{Error, Result};

/// Number of published projects fed to the sequential baseline.
pub const HISTORY_STEPS: usize = 15;

/// Affine standardization of the log-scaled funding inputs (early funding
/// and hourly series), fitted on the training period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub early_mean: f64,
    pub early_std: f64,
    pub series_mean: f64,
    pub series_std: f64,
}

impl Default for InputScaling {
    fn default() -> Self {
        InputScaling {
            early_mean: 0.0,
            early_std: 1.0,
            series_mean: 0.0,
            series_std: 1.0,
        }
    }
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    Some((mean, if std > 1e-9 { std } else { 1.0 }))
}

impl InputScaling {
    /// Fits on the first day of every project whose first day closed by
    /// `horizon`; reads nothing at or after `horizon`.
    pub fn fit(catalog: &ProjectCatalog, log: &InvestmentLog, horizon: i64) -> Self {
        let _scope = log.scope(AccessScope::Before { cutoff: horizon });
        let mut early = Vec::new();
        let mut hourly = Vec::new();
        for p in catalog.iter().filter(|p| p.launch_time + DAY <= horizon) {
            early.push(early_funding(p, log));
            hourly.extend_from_slice(hourly_series(&p.id, log, p.launch_time + DAY).values());
        }
        let mut out = InputScaling::default();
        if let Some((m, s)) = mean_std(&early) {
            (out.early_mean, out.early_std) = (m, s);
        }
        if let Some((m, s)) = mean_std(&hourly) {
            (out.series_mean, out.series_std) = (m, s);
        }
        out
    }

    pub fn early(&self, r: f64) -> f64 {
        (r - self.early_mean) / self.early_std
    }

    pub fn series(&self, v: f64) -> f64 {
        (v - self.series_mean) / self.series_std
    }
}

/// Catalog, log and a frozen encoder, with static features cached.
#[derive(Debug)]
pub struct MarketContext<'a> {
    pub catalog: &'a ProjectCatalog,
    pub log: &'a InvestmentLog,
    pub encoder: &'a Encoder,
    pub scaling: InputScaling,
    features: HashMap<&'a str, Vec<f64>>,
    by_launch: Vec<(i64, &'a str)>,
}

/// What to read beyond the pre-reference features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrepareOptions {
    /// Read target labels (first-day funding, after the reference time).
    pub labels: bool,
    /// Read auxiliary next-day competitor targets when `T + 24h` does not
    /// pass this horizon. `None` disables them.
    pub aux_horizon: Option<i64>,
}

impl PrepareOptions {
    pub fn training(horizon: i64) -> Self {
        PrepareOptions {
            labels: true,
            aux_horizon: Some(horizon),
        }
    }

    pub fn evaluation() -> Self {
        PrepareOptions {
            labels: true,
            aux_horizon: None,
        }
    }
}

/// Tensors for one market window, frozen at its reference time.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowInputs {
    pub reference_time: i64,
    pub history_days: u32,
    pub target_ids: Vec<String>,
    /// `G x m` static features of the targets.
    pub target_x: Tensor,
    /// Target labels when prepared with labels.
    pub labels: Option<Vec<f64>>,
    /// Running projects with at least one edge, in window order.
    pub competitor_ids: Vec<String>,
    /// `C x m` static features of the competitors.
    pub competitor_x: Tensor,
    /// `C x 24` standardized hourly series; column `k` is the hour ending
    /// `k` hours before the reference time.
    pub competitor_series: Tensor,
    /// Row-major `G x C` competition adjacency.
    pub adjacency: Vec<bool>,
    /// Next-day log funding per competitor, training only.
    pub aux_targets: Option<Vec<f64>>,
    /// `N x (m + 1)` initial tree states `[x ∥ r]` with standardized `r`;
    /// the first `G` rows are the targets with `r = 0`.
    pub tree_x: Tensor,
    /// Children (message senders) of every tree node.
    pub tree_children: Vec<Vec<usize>>,
    /// `P x (m + 1)` initial states of every observable project.
    pub history_x: Tensor,
    /// Mean hourly series over all running projects, standardized (zeros
    /// if none).
    pub running_series_mean: Vec<f64>,
    /// Up to `HISTORY_STEPS` most recent published projects' `[x ∥ r]`,
    /// oldest first.
    pub published: Vec<Vec<f64>>,
}

impl WindowInputs {
    pub fn n_targets(&self) -> usize {
        self.target_ids.len()
    }

    pub fn n_competitors(&self) -> usize {
        self.competitor_ids.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.target_x.cols()
    }

    pub fn labels(&self) -> Result<&[f64]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Invalid("window prepared without labels".into()))
    }
}

impl<'a> MarketContext<'a> {
    pub fn new(
        catalog: &'a ProjectCatalog,
        log: &'a InvestmentLog,
        encoder: &'a Encoder,
        scaling: InputScaling,
    ) -> Self {
        let features = catalog
            .iter()
            .map(|p| (p.id.as_str(), encoder.encode(p).0))
            .collect();
        let mut by_launch: Vec<_> = catalog
            .iter()
            .map(|p| (p.launch_time, p.id.as_str()))
            .collect();
        by_launch.sort_unstable();
        MarketContext {
            catalog,
            log,
            encoder,
            scaling,
            features,
            by_launch,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.dim()
    }

    pub fn features(&self, id: &str) -> Result<&[f64]> {
        self.features
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Invalid(format!("unknown project {id:?}")))
    }

    fn rows(&self, ids: &[String]) -> Result<Tensor> {
        let rows = ids
            .iter()
            .map(|id| self.features(id).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        Tensor::from_rows(&rows, self.feature_dim())
    }

    fn state(&self, id: &str, r: f64) -> Result<Vec<f64>> {
        let mut v = self.features(id)?.to_vec();
        v.push(r);
        Ok(v)
    }

    /// Standardized early funding of a project whose first day closed
    /// before the cutoff of the active scope.
    fn early(&self, id: &str) -> f64 {
        self.scaling
            .early(early_funding(self.catalog.expect(id), self.log))
    }

    pub fn prepare(
        &self,
        window: &MarketWindow,
        pruning: PruningMode,
        options: PrepareOptions,
    ) -> Result<WindowInputs> {
        let t_ref = window.reference_time();
        let dim = self.feature_dim();
        let targets = window.targets().to_vec();
        let target_x = self.rows(&targets)?;

        let labels = options.labels.then(|| {
            targets
                .iter()
                .map(|id| compute_label(self.catalog.expect(id), self.log))
                .collect()
        });

        let graph = build_competition_graph(window, self.catalog, pruning);
        let active = graph.active_competitors();
        let competitor_ids: Vec<String> = active
            .iter()
            .map(|&j| graph.competitors[j].clone())
            .collect();
        let mut adjacency = Vec::with_capacity(targets.len() * active.len());
        for g in 0..targets.len() {
            adjacency.extend(active.iter().map(|&j| graph.edge(g, j)));
        }

        let tree = build_propagation_tree(window, self.catalog);

        let (series, running_series_mean, tree_rows, history_rows, published) = {
            let _scope = self.log.scope(AccessScope::Before { cutoff: t_ref });
            let mut running_sum = vec![0.0; SERIES_LEN];
            let mut series_of = HashMap::new();
            for id in &window.running_ids {
                let s = hourly_series(id, self.log, t_ref);
                for (acc, v) in running_sum.iter_mut().zip(s.values()) {
                    *acc += v;
                }
                series_of.insert(id.as_str(), s);
            }
            if !window.running_ids.is_empty() {
                let n = window.running_ids.len() as f64;
                running_sum
                    .iter_mut()
                    .for_each(|v| *v = self.scaling.series(*v / n));
            }
            let series = competitor_ids
                .iter()
                .map(|id| {
                    series_of[id.as_str()]
                        .values()
                        .iter()
                        .map(|&v| self.scaling.series(v))
                        .collect()
                })
                .collect::<Vec<_>>();

            let mut tree_rows = Vec::with_capacity(tree.len());
            for (i, id) in tree.nodes.iter().enumerate() {
                let r = if i < tree.n_roots {
                    0.0
                } else {
                    self.early(id)
                };
                tree_rows.push(self.state(id, r)?);
            }
            let history_rows = window
                .observable_ids
                .iter()
                .map(|id| self.state(id, self.early(id)))
                .collect::<Result<Vec<_>>>()?;

            let end = self.by_launch.partition_point(|&(t, _)| t + DAY <= t_ref);
            let published = self.by_launch[end.saturating_sub(HISTORY_STEPS)..end]
                .iter()
                .map(|&(_, id)| self.state(id, self.early(id)))
                .collect::<Result<Vec<_>>>()?;
            (series, running_sum, tree_rows, history_rows, published)
        };

        let aux_targets = match options.aux_horizon {
            Some(h) if t_ref + DAY <= h => {
                let _scope = self.log.scope(AccessScope::Auxiliary {
                    start: t_ref,
                    end: t_ref + DAY,
                });
                Some(
                    competitor_ids
                        .iter()
                        .map(|id| (1.0 + self.log.amount_in(id, t_ref, t_ref + DAY)).log2())
                        .collect(),
                )
            }
            _ => None,
        };

        Ok(WindowInputs {
            reference_time: t_ref,
            history_days: window.history_days,
            competitor_x: self.rows(&competitor_ids)?,
            competitor_series: Tensor::from_rows(&series, SERIES_LEN)?,
            target_ids: targets,
            target_x,
            labels,
            competitor_ids,
            adjacency,
            aux_targets,
            tree_x: Tensor::from_rows(&tree_rows, dim + 1)?,
            tree_children: tree.children(),
            history_x: Tensor::from_rows(&history_rows, dim + 1)?,
            running_series_mean,
            published,
        })
    }
}
