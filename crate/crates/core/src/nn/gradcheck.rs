//! Central finite-difference checks of tape gradients.

use super::{ParamStore, Tape, Tensor, Var};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    /// `|a - n| / max(|a|, |n|)` over the whole tensor (Euclidean norms).
    pub relative_error: f64,
    pub max_abs_diff: f64,
    pub analytic_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub params: Vec<ParamCheck>,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.relative_error)
            .fold(0.0, f64::max)
    }
}

/// Compares the tape gradient of the scalar built by `f` with central
/// differences of step `eps` for every parameter entry in `store`.
pub fn check_gradients<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, store)?;
    let analytic: Vec<Tensor> = store
        .iter()
        .map(|p| p.grad.clone().expect("backward fills every gradient"))
        .collect();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let v = f(&mut tape, store)?;
        Ok(tape.value(v).item())
    };

    let mut params = Vec::with_capacity(analytic.len());
    let ids: Vec<_> = store.ids().collect();
    for (id, a) in ids.into_iter().zip(analytic) {
        let mut numeric = Tensor::zeros(a.rows(), a.cols());
        for k in 0..a.len() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + eps;
            let up = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig - eps;
            let down = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig;
            numeric.data_mut()[k] = (up - down) / (2.0 * eps);
        }
        let diff = a.zip_map(&numeric, |x, y| x - y);
        let scale = a.norm().max(numeric.norm()).max(1e-12);
        params.push(ParamCheck {
            name: store.get(id).name.clone(),
            relative_error: diff.norm() / scale,
            max_abs_diff: diff.data().iter().map(|d| d.abs()).fold(0.0, f64::max),
            analytic_norm: a.norm(),
        });
    }
    store.clear_grads();
    Ok(GradReport { params })
}
