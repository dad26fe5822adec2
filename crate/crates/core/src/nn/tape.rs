use std::collections::HashMap;

use rand::Rng;

use super::tensor::matmul;
use super::{ParamId, ParamStore, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul { a: Var, ta: bool, b: Var, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { a: Var, row: Var },
    MulCol { a: Var, col: Var },
    OuterAdd { col: Var, row: Var },
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    MaskedSoftmax { a: Var, mask: Vec<bool> },
    ConcatCols(Vec<Var>),
    SliceCols { a: Var, start: usize },
    Transpose(Var),
    GatherRows { a: Var, index: Vec<usize> },
    SegmentSum { a: Var, groups: Vec<Vec<usize>> },
    MeanRows(Var),
    MulConst { a: Var, factor: Tensor },
    Mae { pred: Var, target: Var },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records one forward pass. Call [`Tape::backward`] once to write
/// gradients into the parameter store; a second call is an error.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    consumed: bool,
}

fn shape_err(what: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape()))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Loads a parameter; repeated loads return the same handle.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    /// `op(a) · op(b)`.
    pub fn matmul_ex(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let value = matmul(self.value(a), ta, self.value(b), tb)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul { a, ta, b, tb }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ex(a, false, b, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ex(a, false, b, true)
    }

    /// Row-wise affine map `x Wᵀ + b` for `x: n x in`, `W: out x in`,
    /// `b: 1 x out`. On a single row this is `Wx + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul_t(x, w)?;
        self.add_row(xw, b)
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(what, x, y));
        }
        Ok(x.zip_map(y, f))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(shape_err("add_row", x, r));
        }
        let mut v = x.clone();
        for i in 0..v.rows() {
            for (o, b) in v.row_slice_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(v, Op::AddRow { a, row }, rg))
    }

    /// Scales row `i` of `a` by `col[i]` (`col: rows x 1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (x, c) = (self.value(a), self.value(col));
        if c.cols() != 1 || c.rows() != x.rows() {
            return Err(shape_err("mul_col", x, c));
        }
        let mut v = x.clone();
        for i in 0..v.rows() {
            let s = c.data()[i];
            v.row_slice_mut(i).iter_mut().for_each(|o| *o *= s);
        }
        let rg = self.rg(a) || self.rg(col);
        Ok(self.push(v, Op::MulCol { a, col }, rg))
    }

    /// `out[i, j] = col[i] + row[j]` for `col: m x 1`, `row: 1 x n`.
    pub fn outer_add(&mut self, col: Var, row: Var) -> Result<Var> {
        let (c, r) = (self.value(col), self.value(row));
        if c.cols() != 1 || r.rows() != 1 {
            return Err(shape_err("outer_add", c, r));
        }
        let mut v = Tensor::zeros(c.rows(), r.cols());
        for i in 0..c.rows() {
            let ci = c.data()[i];
            for (o, rj) in v.row_slice_mut(i).iter_mut().zip(r.data()) {
                *o = ci + rj;
            }
        }
        let rg = self.rg(col) || self.rg(row);
        Ok(self.push(v, Op::OuterAdd { col, row }, rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, factor), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(v, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), |x| {
            if x > 0.0 {
                x
            } else {
                slope * x
            }
        })
    }

    /// Row-wise softmax over the entries where `mask` (row-major, same shape
    /// as `a`) is set. Rows without any set entry become zero rows.
    pub fn masked_softmax(&mut self, a: Var, mask: Vec<bool>) -> Result<Var> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(Error::Shape(format!(
                "mask of {} entries for {:?}",
                mask.len(),
                x.shape()
            )));
        }
        let cols = x.cols();
        let mut v = Tensor::zeros(x.rows(), cols);
        for i in 0..x.rows() {
            let row = x.row_slice(i);
            let m = &mask[i * cols..(i + 1) * cols];
            let max = row
                .iter()
                .zip(m)
                .filter(|(_, &on)| on)
                .map(|(&r, _)| r)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let out = v.row_slice_mut(i);
            let mut total = 0.0;
            for j in 0..cols {
                if m[j] {
                    out[j] = (row[j] - max).exp();
                    total += out[j];
                }
            }
            out.iter_mut().for_each(|o| *o /= total);
        }
        let rg = self.rg(a);
        Ok(self.push(v, Op::MaskedSoftmax { a, mask }, rg))
    }

    /// Softmax of leaky-rectified logits over a `1 x n` row.
    pub fn attention_softmax(&mut self, logits: Var) -> Result<Var> {
        let x = self.value(logits);
        if x.is_empty() {
            return Err(Error::Empty("attention logits"));
        }
        if x.rows() != 1 {
            return Err(Error::Shape(format!("attention logits {:?}", x.shape())));
        }
        let n = x.cols();
        let l = self.leaky_relu(logits, super::LEAKY_SLOPE);
        self.masked_softmax(l, vec![true; n])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("concat parts"));
        };
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(shape_err("concat_cols", self.value(first), t));
            }
            cols += t.cols();
        }
        let mut v = Tensor::zeros(rows, cols);
        for i in 0..rows {
            let mut at = 0;
            for &p in parts {
                let src = self.value(p).row_slice(i);
                v.row_slice_mut(i)[at..at + src.len()].copy_from_slice(src);
                at += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..start + len` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.cols() {
            return Err(Error::Shape(format!(
                "slice {start}..{} of {:?}",
                start + len,
                x.shape()
            )));
        }
        let mut v = Tensor::zeros(x.rows(), len);
        for i in 0..x.rows() {
            v.row_slice_mut(i)
                .copy_from_slice(&x.row_slice(i)[start..start + len]);
        }
        let rg = self.rg(a);
        Ok(self.push(v, Op::SliceCols { a, start }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(v, Op::Transpose(a), rg)
    }

    /// Row `r` of the output is row `index[r]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::Shape(format!("row {bad} of {:?}", x.shape())));
        }
        let mut v = Tensor::zeros(index.len(), x.cols());
        for (r, &i) in index.iter().enumerate() {
            v.row_slice_mut(r).copy_from_slice(x.row_slice(i));
        }
        let rg = self.rg(a);
        Ok(self.push(v, Op::GatherRows { a, index }, rg))
    }

    /// Row `v` of the output is the sum of rows `groups[v]` of `a` (zero for
    /// an empty group).
    pub fn segment_sum(&mut self, a: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let x = self.value(a);
        let mut v = Tensor::zeros(groups.len(), x.cols());
        for (r, group) in groups.iter().enumerate() {
            for &i in group {
                if i >= x.rows() {
                    return Err(Error::Shape(format!("row {i} of {:?}", x.shape())));
                }
                for (o, s) in v.row_slice_mut(r).iter_mut().zip(x.row_slice(i)) {
                    *o += s;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(v, Op::SegmentSum { a, groups }, rg))
    }

    /// Column means as a `1 x cols` row (zeros for an empty input).
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Tensor::zeros(1, x.cols());
        if x.rows() > 0 {
            for i in 0..x.rows() {
                for (o, s) in v.data_mut().iter_mut().zip(x.row_slice(i)) {
                    *o += s;
                }
            }
            let n = x.rows() as f64;
            v.data_mut().iter_mut().for_each(|o| *o /= n);
        }
        let rg = self.rg(a);
        self.push(v, Op::MeanRows(a), rg)
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, factor: Tensor) -> Result<Var> {
        let x = self.value(a);
        if x.shape() != factor.shape() {
            return Err(shape_err("mul_const", x, &factor));
        }
        let v = x.zip_map(&factor, |p, q| p * q);
        let rg = self.rg(a);
        Ok(self.push(v, Op::MulConst { a, factor }, rg))
    }

    /// Inverted dropout: during training each unit survives with probability
    /// `keep` and is scaled by `1/keep`; otherwise the identity.
    pub fn dropout(
        &mut self,
        a: Var,
        keep: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::Invalid(format!(
                "dropout keep {keep} outside (0, 1]"
            )));
        }
        if !training || keep == 1.0 {
            return Ok(a);
        }
        let x = self.value(a);
        let mask = (0..x.len())
            .map(|_| {
                if rng.random_bool(keep) {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let factor = Tensor::from_vec(x.rows(), x.cols(), mask)?;
        self.mul_const(a, factor)
    }

    /// Mean absolute error, a `1 x 1` value. The subgradient at a tie is 0.
    pub fn mae(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(shape_err("mae", p, t));
        }
        if p.is_empty() {
            return Err(Error::Empty("mae input"));
        }
        let n = p.len() as f64;
        let v = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(v), Op::Mae { pred, target }, rg))
    }

    /// Sum of all entries, a `1 x 1` value.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(v, Op::Sum(a), rg)
    }

    /// Back-propagates from a `1 x 1` value and stores the gradient of every
    /// parameter (zeros for parameters not on the tape) in `store`.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.value(loss).shape() != [1, 1] {
            return Err(Error::Shape(format!(
                "backward from {:?}, expected a scalar",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        store.zero_grads();
        for (&id, &v) in &self.params {
            if let Some(g) = &grads[v.0] {
                store.accumulate_grad(id, g);
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(x) => x.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Constant | Op::Param => {}
            &Op::MatMul { a, ta, b, tb } => {
                let (av, bv) = (val(a), val(b));
                if self.nodes[a.0].requires_grad {
                    let da = if ta {
                        matmul(bv, tb, g, true)?
                    } else {
                        matmul(g, false, bv, !tb)?
                    };
                    acc(a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let db = if tb {
                        matmul(g, true, av, ta)?
                    } else {
                        matmul(av, !ta, g, false)?
                    };
                    acc(b, db);
                }
            }
            &Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            &Op::Sub(a, b) => {
                acc(a, g.clone());
                acc(b, g.map(|x| -x));
            }
            &Op::Mul(a, b) => {
                acc(a, g.zip_map(val(b), |x, y| x * y));
                acc(b, g.zip_map(val(a), |x, y| x * y));
            }
            &Op::AddRow { a, row } => {
                acc(a, g.clone());
                let mut dr = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, x) in dr.data_mut().iter_mut().zip(g.row_slice(r)) {
                        *o += x;
                    }
                }
                acc(row, dr);
            }
            &Op::MulCol { a, col } => {
                let (av, cv) = (val(a), val(col));
                let mut da = g.clone();
                let mut dc = Tensor::zeros(cv.rows(), 1);
                for r in 0..g.rows() {
                    let s = cv.data()[r];
                    da.row_slice_mut(r).iter_mut().for_each(|x| *x *= s);
                    dc.data_mut()[r] = g
                        .row_slice(r)
                        .iter()
                        .zip(av.row_slice(r))
                        .map(|(x, y)| x * y)
                        .sum();
                }
                acc(a, da);
                acc(col, dc);
            }
            &Op::OuterAdd { col, row } => {
                let mut dc = Tensor::zeros(g.rows(), 1);
                let mut dr = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    dc.data_mut()[r] = g.row_slice(r).iter().sum();
                    for (o, x) in dr.data_mut().iter_mut().zip(g.row_slice(r)) {
                        *o += x;
                    }
                }
                acc(col, dc);
                acc(row, dr);
            }
            &Op::Scale(a, s) => acc(a, g.map(|x| x * s)),
            &Op::AddScalar(a) => acc(a, g.clone()),
            &Op::Sigmoid(a) => acc(a, g.zip_map(&node.value, |x, y| x * y * (1.0 - y))),
            &Op::Tanh(a) => acc(a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y))),
            &Op::Relu(a) => acc(a, g.zip_map(val(a), |x, y| if y > 0.0 { x } else { 0.0 })),
            &Op::LeakyRelu(a, s) => {
                acc(a, g.zip_map(val(a), |x, y| if y > 0.0 { x } else { s * x }))
            }
            Op::MaskedSoftmax { a, mask } => {
                let y = &node.value;
                let cols = y.cols();
                let mut da = Tensor::zeros(y.rows(), cols);
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let m = &mask[r * cols..(r + 1) * cols];
                    let dot: f64 = (0..cols).filter(|&j| m[j]).map(|j| yr[j] * gr[j]).sum();
                    let out = da.row_slice_mut(r);
                    for j in 0..cols {
                        if m[j] {
                            out[j] = yr[j] * (gr[j] - dot);
                        }
                    }
                }
                acc(*a, da);
            }
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut dp = Tensor::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        dp.row_slice_mut(r)
                            .copy_from_slice(&g.row_slice(r)[at..at + w]);
                    }
                    acc(p, dp);
                    at += w;
                }
            }
            &Op::SliceCols { a, start } => {
                let av = val(a);
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for r in 0..g.rows() {
                    da.row_slice_mut(r)[start..start + g.cols()].copy_from_slice(g.row_slice(r));
                }
                acc(a, da);
            }
            &Op::Transpose(a) => acc(a, g.transpose()),
            Op::GatherRows { a, index } => {
                let av = val(*a);
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for (r, &src) in index.iter().enumerate() {
                    for (o, x) in da.row_slice_mut(src).iter_mut().zip(g.row_slice(r)) {
                        *o += x;
                    }
                }
                acc(*a, da);
            }
            Op::SegmentSum { a, groups } => {
                let av = val(*a);
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for (r, group) in groups.iter().enumerate() {
                    for &src in group {
                        for (o, x) in da.row_slice_mut(src).iter_mut().zip(g.row_slice(r)) {
                            *o += x;
                        }
                    }
                }
                acc(*a, da);
            }
            &Op::MeanRows(a) => {
                let av = val(a);
                let n = av.rows() as f64;
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    for (o, x) in da.row_slice_mut(r).iter_mut().zip(g.data()) {
                        *o = x / n;
                    }
                }
                acc(a, da);
            }
            Op::MulConst { a, factor } => acc(*a, g.zip_map(factor, |x, y| x * y)),
            &Op::Mae { pred, target } => {
                let (p, t) = (val(pred), val(target));
                let scale = g.item() / p.len() as f64;
                let dp = p.zip_map(t, |x, y| {
                    if x > y {
                        scale
                    } else if x < y {
                        -scale
                    } else {
                        0.0
                    }
                });
                acc(target, dp.map(|x| -x));
                acc(pred, dp);
            }
            &Op::Sum(a) => {
                let av = val(a);
                acc(a, Tensor::filled(av.rows(), av.cols(), g.item()));
            }
        }
        Ok(())
    }
}
