use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GmeModel, ModelSpec, TrainConfig, WindowInputs};
use crate::eval::Metrics;
use crate::nn::{sgd_step, Tape};
use crate::{Error, Result};

/// Generator stream for parameter initialization.
pub(crate) const INIT_STREAM: u64 = 0;
/// Generator stream for dropout masks.
const DROPOUT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean joint loss over the epoch's windows.
    pub train_loss: f64,
    /// Learning rate at the last step of the epoch.
    pub learning_rate: f64,
    pub validation: Option<Metrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }
}

pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean label over the windows' targets.
pub fn mean_label(windows: &[WindowInputs]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for w in windows {
        let labels = w.labels()?;
        sum += labels.iter().sum::<f64>();
        n += labels.len();
    }
    if n == 0 {
        return Err(Error::Empty("training labels"));
    }
    Ok(sum / n as f64)
}

/// Initializes a model for `config`; the readout bias starts at the mean
/// training label so the rectified output begins in its active region.
pub fn init_model(config: &TrainConfig, windows: &[WindowInputs]) -> Result<GmeModel> {
    config.validate()?;
    let first = windows.first().ok_or(Error::Empty("training windows"))?;
    let spec = ModelSpec::from_config(config, first.feature_dim());
    let mut rng = rng_stream(config.seed, INIT_STREAM);
    GmeModel::new(spec, mean_label(windows)?, &mut rng)
}

/// Trains a fresh model: chronological passes over `windows`, one SGD step
/// per window.
pub fn train(
    windows: &[WindowInputs],
    validation: Option<&[WindowInputs]>,
    config: &TrainConfig,
) -> Result<(GmeModel, History)> {
    let mut model = init_model(config, windows)?;
    let history = train_model(&mut model, windows, validation, config)?;
    Ok((model, history))
}

/// Continues training an existing model.
pub fn train_model(
    model: &mut GmeModel,
    windows: &[WindowInputs],
    validation: Option<&[WindowInputs]>,
    config: &TrainConfig,
) -> Result<History> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    let schedule = config.schedule();
    let mut rng = rng_stream(config.seed, DROPOUT_STREAM);
    let mut history = History::default();
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        let mut lr = schedule.learning_rate(model.store.step());
        for w in windows {
            let mut tape = Tape::new();
            let loss = model.window_loss(&mut tape, w, config.eta, true, &mut rng)?;
            total += tape.value(loss).item();
            tape.backward(loss, &mut model.store)?;
            lr = sgd_step(&mut model.store, &schedule)?;
        }
        let validation = match validation {
            Some(v) if !v.is_empty() => Some(evaluate(model, v)?),
            _ => None,
        };
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: total / windows.len() as f64,
            learning_rate: lr,
            validation,
        });
    }
    Ok(history)
}

/// Window-weighted metrics of the model on labelled windows.
pub fn evaluate(model: &GmeModel, windows: &[WindowInputs]) -> Result<Metrics> {
    let mut preds = Vec::with_capacity(windows.len());
    let mut labels = Vec::with_capacity(windows.len());
    for w in windows {
        preds.push(model.predict(w)?);
        labels.push(w.labels()?.to_vec());
    }
    crate::eval::aggregate(&preds, &labels).map(|a| a.weighted)
}
