use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean absolute and root mean squared error over `n` predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
}

pub fn metrics(pred: &[f64], labels: &[f64]) -> Result<Metrics> {
    if pred.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            labels.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("metric input"));
    }
    let n = pred.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, y) in pred.iter().zip(labels) {
        let d = y - p;
        abs += d.abs();
        sq += d * d;
    }
    Ok(Metrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        n: pred.len(),
    })
}

/// Per-window metrics plus two aggregates: the per-window values averaged
/// with target-count weights, and the metrics of all targets pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub per_window: Vec<Metrics>,
    pub weighted: Metrics,
    pub pooled: Metrics,
}

pub fn aggregate(preds: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<Aggregate> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} prediction windows for {} label windows",
            preds.len(),
            labels.len()
        )));
    }
    let per_window = preds
        .iter()
        .zip(labels)
        .map(|(p, y)| metrics(p, y))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = per_window.iter().map(|m| m.n).sum();
    if total == 0 {
        return Err(Error::Empty("metric windows"));
    }
    let weight = |f: fn(&Metrics) -> f64| {
        per_window.iter().map(|m| f(m) * m.n as f64).sum::<f64>() / total as f64
    };
    let weighted = Metrics {
        mae: weight(|m| m.mae),
        rmse: weight(|m| m.rmse),
        n: total,
    };
    let all_p: Vec<f64> = preds.iter().flatten().copied().collect();
    let all_y: Vec<f64> = labels.iter().flatten().copied().collect();
    let pooled = metrics(&all_p, &all_y)?;
    Ok(Aggregate {
        per_window,
        weighted,
        pooled,
    })
}
