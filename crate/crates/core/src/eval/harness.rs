use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{fit_regressor, ConstantMean, LstmBaseline, MlpBaseline, Regressor};
use super::{aggregate, Aggregate, MarketSplit, Metrics};
use crate::graph::PruningMode;
use crate::market::{InvestmentLog, ProjectCatalog};
use crate::model::{mean_label, train, Ablation, TrainConfig, WindowInputs};
use crate::{Error, Result};

/// A model or baseline scored by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Variant {
    Gme(Ablation),
    Mlp,
    Lstm,
    ConstantMean,
}

impl Variant {
    pub fn all() -> Vec<Variant> {
        let mut v: Vec<Variant> = Ablation::ALL.into_iter().map(Variant::Gme).collect();
        v.extend([Variant::Mlp, Variant::Lstm, Variant::ConstantMean]);
        v
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Gme(a) => a.as_str(),
            Variant::Mlp => "mlp",
            Variant::Lstm => "lstm",
            Variant::ConstantMean => "constant-mean",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::all()
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown variant {s:?}")))
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.as_str().to_string()
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// History lengths and pruning modes to cross.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub t_h: Vec<u32>,
    pub pruning: Vec<PruningMode>,
}

impl Grid {
    pub fn single(t_h: u32, pruning: PruningMode) -> Self {
        Grid {
            t_h: vec![t_h],
            pruning: vec![pruning],
        }
    }

    /// `t_h` in `1..=7` crossed with every pruning mode.
    pub fn full() -> Self {
        Grid {
            t_h: (1..=7).collect(),
            pruning: PruningMode::ALL.to_vec(),
        }
    }

    fn cells(&self) -> Vec<(u32, PruningMode)> {
        self.pruning
            .iter()
            .flat_map(|&p| self.t_h.iter().map(move |&t| (t, p)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub reference_time: i64,
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
}

/// Test metrics of one variant in one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub variant: String,
    pub t_h: u32,
    pub pruning: PruningMode,
    /// Per-window values averaged with target-count weights.
    pub weighted: Metrics,
    /// All test targets pooled.
    pub pooled: Metrics,
    pub per_window: Vec<WindowMetrics>,
    pub config: TrainConfig,
    pub wall_clock_secs: f64,
}

impl MetricReport {
    pub fn new(
        variant: &str,
        config: &TrainConfig,
        windows: &[WindowInputs],
        preds: &[Vec<f64>],
        wall_clock_secs: f64,
    ) -> Result<Self> {
        let labels = windows
            .iter()
            .map(|w| w.labels().map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        let Aggregate {
            per_window,
            weighted,
            pooled,
        } = aggregate(preds, &labels)?;
        Ok(MetricReport {
            variant: variant.to_string(),
            t_h: config.t_h,
            pruning: config.pruning,
            weighted,
            pooled,
            per_window: windows
                .iter()
                .zip(per_window)
                .map(|(w, m)| WindowMetrics {
                    reference_time: w.reference_time,
                    mae: m.mae,
                    rmse: m.rmse,
                    n: m.n,
                })
                .collect(),
            config: config.clone(),
            wall_clock_secs,
        })
    }

    /// The report without its timing, for reproducibility comparisons.
    pub fn untimed(&self) -> MetricReport {
        MetricReport {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }
}

/// Trains `variant` on `train` and returns its predictions on `test`.
pub fn run_variant(
    variant: Variant,
    train_windows: &[WindowInputs],
    test_windows: &[WindowInputs],
    config: &TrainConfig,
) -> Result<Vec<Vec<f64>>> {
    let first = train_windows
        .first()
        .ok_or(Error::Empty("training windows"))?;
    let m = first.feature_dim();
    match variant {
        Variant::Gme(ablation) => {
            let config = TrainConfig {
                ablation,
                ..config.clone()
            };
            let (model, _) = train(train_windows, None, &config)?;
            test_windows.iter().map(|w| model.predict(w)).collect()
        }
        Variant::Mlp => {
            let bias = mean_label(train_windows)?;
            let mut model = MlpBaseline::new(m, config.hidden, bias, config.seed)?;
            fit_regressor(&mut model, train_windows, None, config)?;
            test_windows.iter().map(|w| model.predict(w)).collect()
        }
        Variant::Lstm => {
            let bias = mean_label(train_windows)?;
            let mut model = LstmBaseline::new(m, config.hidden, bias, config.seed)?;
            fit_regressor(&mut model, train_windows, None, config)?;
            test_windows.iter().map(|w| model.predict(w)).collect()
        }
        Variant::ConstantMean => {
            let model = ConstantMean::fit(train_windows)?;
            Ok(test_windows.iter().map(|w| model.predict(w)).collect())
        }
    }
}

/// Trains and scores every variant in every grid cell with the shared seed
/// of `config`. Windows are prepared cell by cell; within a cell the
/// variants train in parallel on at most `jobs` threads. Reports come back
/// in grid order (pruning outer, `t_h` inner), variants in the given order.
pub fn run_matrix(
    catalog: &ProjectCatalog,
    log: &InvestmentLog,
    split: &MarketSplit,
    variants: &[Variant],
    grid: &Grid,
    config: &TrainConfig,
    jobs: usize,
) -> Result<Vec<MetricReport>> {
    config.validate()?;
    if jobs == 0 {
        return Err(Error::Invalid("jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let mut reports = Vec::new();
    for (t_h, pruning) in grid.cells() {
        let cell = TrainConfig {
            t_h,
            pruning,
            ..config.clone()
        };
        cell.validate()?;
        let data = split.prepare(catalog, log, t_h, pruning)?;
        let run = |&variant: &Variant| -> Result<MetricReport> {
            let start = Instant::now();
            let preds = run_variant(variant, &data.train, &data.test, &cell)?;
            let secs = start.elapsed().as_secs_f64();
            MetricReport::new(variant.as_str(), &cell, &data.test, &preds, secs)
        };
        let cell_reports =
            pool.install(|| variants.par_iter().map(run).collect::<Result<Vec<_>>>())?;
        reports.extend(cell_reports);
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PredictionLine {
    project_id: String,
    prediction: f64,
}

/// Reads externally produced predictions: one JSON object per line with
/// `project_id` and `prediction`.
pub fn read_predictions(path: &Path) -> Result<HashMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(line)
            .map_err(|e| Error::Schema(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if !p.prediction.is_finite() {
            return Err(Error::Schema(format!(
                "{}:{}: non-finite prediction",
                path.display(),
                i + 1
            )));
        }
        out.insert(p.project_id, p.prediction);
    }
    Ok(out)
}

/// Scores external predictions on prepared test windows; every target must
/// have a prediction.
pub fn score_predictions(
    variant: &str,
    config: &TrainConfig,
    windows: &[WindowInputs],
    predictions: &HashMap<String, f64>,
) -> Result<MetricReport> {
    let preds = windows
        .iter()
        .map(|w| {
            w.target_ids
                .iter()
                .map(|id| {
                    predictions
                        .get(id)
                        .copied()
                        .ok_or_else(|| Error::Invalid(format!("no prediction for {id}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    MetricReport::new(variant, config, windows, &preds, 0.0)
}

/// Published MAE and RMSE on the 7K Indiegogo market, printed under report
/// tables for shape comparison.
pub const REFERENCE_VALUES: [(&str, f64, f64); 5] = [
    ("mlp", 0.2201, 0.3377),
    ("lstm", 0.2134, 0.3316),
    ("gme-c", 0.1941, 0.3047),
    ("gme-h", 0.1880, 0.3086),
    ("full", 0.1771, 0.2940),
];

/// Aligned text table, one row per report, followed by the reference
/// values as footnotes.
pub fn format_table(reports: &[MetricReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>3} {:<10} {:>8} {:>8} {:>10} {:>11} {:>7} {:>8}",
        "variant", "t_h", "pruning", "MAE", "RMSE", "pooled MAE", "pooled RMSE", "targets", "secs"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<14} {:>3} {:<10} {:>8.4} {:>8.4} {:>10.4} {:>11.4} {:>7} {:>8.2}",
            r.variant,
            r.t_h,
            r.pruning.as_str(),
            r.weighted.mae,
            r.weighted.rmse,
            r.pooled.mae,
            r.pooled.rmse,
            r.pooled.n,
            r.wall_clock_secs
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "reference (Indiegogo-7K, MAE / RMSE; not comparable to synthetic data):"
    );
    for (name, mae, rmse) in REFERENCE_VALUES {
        let _ = writeln!(out, "  {name:<14} {mae:.4} / {rmse:.4}");
    }
    out
}

/// One JSON object per report.
pub fn to_json_lines(reports: &[MetricReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Schema(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Metric-versus-history-length rows for plotting.
pub fn to_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("variant,pruning,t_h,mae,rmse,pooled_mae,pooled_rmse\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.variant,
            r.pruning.as_str(),
            r.t_h,
            r.weighted.mae,
            r.weighted.rmse,
            r.pooled.mae,
            r.pooled.rmse
        );
    }
    out
}
