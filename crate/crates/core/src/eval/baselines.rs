use rand_chacha::ChaCha8Rng;

use super::{aggregate, Metrics};
use crate::features::SERIES_LEN;
use crate::model::{
    mean_label, rng_stream, EpochRecord, History, TrainConfig, WindowInputs, HISTORY_STEPS,
    INIT_STREAM,
};
use crate::nn::{sgd_step, Init, LstmParams, ParamId, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// A per-window regressor trained with the target loss only.
pub trait Regressor {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// `G x 1` predictions for the window's targets.
    fn forward(&self, tape: &mut Tape, inputs: &WindowInputs) -> Result<Var>;

    fn predict(&self, inputs: &WindowInputs) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, inputs)?;
        Ok(tape.value(out).data().to_vec())
    }
}

fn labels_var(tape: &mut Tape, inputs: &WindowInputs) -> Result<Var> {
    Ok(tape.constant(Tensor::column(inputs.labels()?.to_vec())))
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    rng_stream(seed, INIT_STREAM)
}

/// Feed-forward baseline over the target's static features, the mean
/// hourly series of the running projects and the mean initial state of the
/// historical projects.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBaseline {
    pub store: ParamStore,
    input_dim: usize,
    layers: [(ParamId, ParamId); 3],
}

impl MlpBaseline {
    pub fn new(input_dim: usize, hidden: usize, output_bias: f64, seed: u64) -> Result<Self> {
        let mut rng = init_rng(seed);
        let mut s = ParamStore::new();
        let width = input_dim + SERIES_LEN + input_dim + 1;
        let u = Init::UniformFanIn;
        let layers = [
            (
                s.add("mlp.l1.w", hidden, width, u, &mut rng)?,
                s.add("mlp.l1.b", 1, hidden, Init::Zeros, &mut rng)?,
            ),
            (
                s.add("mlp.l2.w", hidden, hidden, u, &mut rng)?,
                s.add("mlp.l2.b", 1, hidden, Init::Zeros, &mut rng)?,
            ),
            (
                s.add("mlp.l3.w", 1, hidden, u, &mut rng)?,
                s.add("mlp.l3.b", 1, 1, Init::Constant(output_bias), &mut rng)?,
            ),
        ];
        Ok(MlpBaseline {
            store: s,
            input_dim,
            layers,
        })
    }

    /// The concatenated input rows, `G x (2m + 25)`.
    pub fn input_rows(inputs: &WindowInputs) -> Result<Tensor> {
        let m = inputs.feature_dim();
        if inputs.history_x.rows() > 0 && inputs.history_x.cols() != m + 1 {
            return Err(Error::Shape("history states do not match features".into()));
        }
        let mut pooled = vec![0.0; m + 1];
        let n = inputs.history_x.rows();
        for r in 0..n {
            for (acc, v) in pooled.iter_mut().zip(inputs.history_x.row_slice(r)) {
                *acc += v / n as f64;
            }
        }
        let rows: Vec<Vec<f64>> = (0..inputs.n_targets())
            .map(|g| {
                let mut row = inputs.target_x.row_slice(g).to_vec();
                row.extend_from_slice(&inputs.running_series_mean);
                row.extend_from_slice(&pooled);
                row
            })
            .collect();
        Tensor::from_rows(&rows, 2 * m + SERIES_LEN + 1)
    }
}

impl Regressor for MlpBaseline {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, tape: &mut Tape, inputs: &WindowInputs) -> Result<Var> {
        if inputs.feature_dim() != self.input_dim {
            return Err(Error::Shape(format!(
                "window features have {} dims, baseline expects {}",
                inputs.feature_dim(),
                self.input_dim
            )));
        }
        let mut x = tape.constant(Self::input_rows(inputs)?);
        for &(w, b) in &self.layers {
            let (w, b) = (tape.param(&self.store, w), tape.param(&self.store, b));
            let z = tape.linear(x, w, b)?;
            x = tape.relu(z);
        }
        Ok(x)
    }
}

/// Sequential baseline: an LSTM over the most recent published projects'
/// initial states, with a linear head on the final state and the target's
/// static features.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmBaseline {
    pub store: ParamStore,
    input_dim: usize,
    hidden: usize,
    lstm: LstmParams,
    head_w: ParamId,
    head_b: ParamId,
}

impl LstmBaseline {
    pub fn new(input_dim: usize, hidden: usize, output_bias: f64, seed: u64) -> Result<Self> {
        let mut rng = init_rng(seed);
        let mut s = ParamStore::new();
        let lstm = LstmParams::new(&mut s, "seq.lstm", input_dim + 1, hidden, &mut rng)?;
        let head_w = s.add(
            "seq.head.w",
            1,
            hidden + input_dim,
            Init::UniformFanIn,
            &mut rng,
        )?;
        let head_b = s.add("seq.head.b", 1, 1, Init::Constant(output_bias), &mut rng)?;
        Ok(LstmBaseline {
            store: s,
            input_dim,
            hidden,
            lstm,
            head_w,
            head_b,
        })
    }

    /// `HISTORY_STEPS` rows of width `m + 1`, left-padded with zero states.
    pub fn steps(inputs: &WindowInputs) -> Result<Vec<Vec<f64>>> {
        let width = inputs.feature_dim() + 1;
        if inputs.published.len() > HISTORY_STEPS {
            return Err(Error::Invalid("more published states than steps".into()));
        }
        if inputs.published.iter().any(|s| s.len() != width) {
            return Err(Error::Shape("published state width".into()));
        }
        let pad = HISTORY_STEPS - inputs.published.len();
        Ok(std::iter::repeat_n(vec![0.0; width], pad)
            .chain(inputs.published.iter().cloned())
            .collect())
    }
}

impl Regressor for LstmBaseline {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, tape: &mut Tape, inputs: &WindowInputs) -> Result<Var> {
        if inputs.feature_dim() != self.input_dim {
            return Err(Error::Shape(format!(
                "window features have {} dims, baseline expects {}",
                inputs.feature_dim(),
                self.input_dim
            )));
        }
        let steps = Self::steps(inputs)?
            .into_iter()
            .map(|row| tape.constant(Tensor::row(row)))
            .collect::<Vec<_>>();
        let h = self.lstm.run(tape, &self.store, &steps)?;
        let zeros = tape.constant(Tensor::zeros(inputs.n_targets(), 1));
        let h = tape.outer_add(zeros, h)?;
        debug_assert_eq!(tape.value(h).cols(), self.hidden);
        let x = tape.constant(inputs.target_x.clone());
        let z = tape.concat_cols(&[h, x])?;
        let (w, b) = (
            tape.param(&self.store, self.head_w),
            tape.param(&self.store, self.head_b),
        );
        let out = tape.linear(z, w, b)?;
        Ok(tape.relu(out))
    }
}

/// Trains `model` with the target MAE, one SGD step per window, using the
/// schedule and epoch count of `config`.
pub fn fit_regressor(
    model: &mut impl Regressor,
    windows: &[WindowInputs],
    validation: Option<&[WindowInputs]>,
    config: &TrainConfig,
) -> Result<History> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    let schedule = config.schedule();
    let mut history = History::default();
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        let mut lr = schedule.learning_rate(model.store().step());
        for w in windows {
            let mut tape = Tape::new();
            let pred = model.forward(&mut tape, w)?;
            let y = labels_var(&mut tape, w)?;
            let loss = tape.mae(pred, y)?;
            total += tape.value(loss).item();
            tape.backward(loss, model.store_mut())?;
            lr = sgd_step(model.store_mut(), &schedule)?;
        }
        let validation = match validation {
            Some(v) if !v.is_empty() => Some(evaluate_regressor(model, v)?),
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

pub fn evaluate_regressor(model: &impl Regressor, windows: &[WindowInputs]) -> Result<Metrics> {
    let mut preds = Vec::with_capacity(windows.len());
    let mut labels = Vec::with_capacity(windows.len());
    for w in windows {
        preds.push(model.predict(w)?);
        labels.push(w.labels()?.to_vec());
    }
    aggregate(&preds, &labels).map(|a| a.weighted)
}

/// Predicts the mean training label for every target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantMean {
    pub value: f64,
}

impl ConstantMean {
    pub fn fit(windows: &[WindowInputs]) -> Result<Self> {
        Ok(ConstantMean {
            value: mean_label(windows)?,
        })
    }

    pub fn predict(&self, inputs: &WindowInputs) -> Vec<f64> {
        vec![self.value; inputs.n_targets()]
    }
}
