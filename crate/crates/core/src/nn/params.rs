use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

/// Handle to a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// How a parameter's initial values are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform in `(-1/sqrt(cols), 1/sqrt(cols))`; weights are stored
    /// `out x in`, so `cols` is the fan-in.
    UniformFanIn,
    /// Zeros except the forget-gate block (second quarter), which is 1.
    LstmBias {
        hidden: usize,
    },
}

impl Init {
    fn draw(self, rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
        match self {
            Init::Zeros => Tensor::zeros(rows, cols),
            Init::Constant(v) => Tensor::filled(rows, cols, v),
            Init::UniformFanIn => {
                let bound = 1.0 / (cols.max(1) as f64).sqrt();
                let data = (0..rows * cols)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Tensor::from_vec(rows, cols, data).expect("shape by construction")
            }
            Init::LstmBias { hidden } => {
                let mut t = Tensor::zeros(rows, cols);
                t.data_mut()[hidden..2 * hidden].fill(1.0);
                t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub init: Init,
}

/// Named trainable parameters plus the optimizer step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, ParamId>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let value = init.draw(rows, cols, rng);
        self.insert(name, value, init)
    }

    /// Inserts a parameter with explicit values.
    pub fn insert(&mut self, name: &str, value: Tensor, init: Init) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.params.len());
        self.index.insert(name.to_string(), id);
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: None,
            init,
        });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.params[id.0].grad.as_ref()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Number of optimizer steps taken.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces every gradient with zeros.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = Some(Tensor::zeros(p.value.rows(), p.value.cols()));
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor) {
        let p = &mut self.params[id.0];
        match &mut p.grad {
            Some(x) => x.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }
}
