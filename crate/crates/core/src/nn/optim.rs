use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::{Error, Result};

/// `lr(step) = lr0 * rate^(step / steps)`, with integer division when
/// `staircase` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialDecay {
    pub lr0: f64,
    pub rate: f64,
    pub steps: u64,
    pub staircase: bool,
}

impl Default for ExponentialDecay {
    fn default() -> Self {
        ExponentialDecay {
            lr0: 0.02,
            rate: 0.95,
            steps: 100,
            staircase: true,
        }
    }
}

impl ExponentialDecay {
    pub fn learning_rate(&self, step: u64) -> f64 {
        let exponent = if self.staircase {
            (step / self.steps.max(1)) as f64
        } else {
            step as f64 / self.steps.max(1) as f64
        };
        self.lr0 * self.rate.powf(exponent)
    }
}

/// One plain SGD update with the scheduled learning rate. Consumes the
/// gradients and advances the step counter; returns the rate used.
pub fn sgd_step(store: &mut ParamStore, schedule: &ExponentialDecay) -> Result<f64> {
    if store.iter().any(|p| p.grad.is_none()) {
        return Err(Error::MissingGradients);
    }
    let lr = schedule.learning_rate(store.step());
    for p in store.iter_mut() {
        let grad = p.grad.take().expect("checked above");
        for (w, g) in p.value.data_mut().iter_mut().zip(grad.data()) {
            *w -= lr * g;
        }
    }
    store.set_step(store.step() + 1);
    Ok(lr)
}
