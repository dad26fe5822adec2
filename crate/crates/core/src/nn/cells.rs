use rand::Rng;

use super::{Init, ParamId, ParamStore, Tape, Var};
use crate::Result;

/// Negative slope of the leaky rectifier applied to attention logits.
pub const LEAKY_SLOPE: f64 = 0.2;

/// LSTM weights with gate blocks stacked in the order input, forget, cell,
/// output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let g = 4 * hidden;
        Ok(Self {
            w_ih: store.add(&format!("{prefix}.w_ih"), g, input, Init::UniformFanIn, rng)?,
            w_hh: store.add(
                &format!("{prefix}.w_hh"),
                g,
                hidden,
                Init::UniformFanIn,
                rng,
            )?,
            bias: store.add(
                &format!("{prefix}.bias"),
                1,
                g,
                Init::LstmBias { hidden },
                rng,
            )?,
            input,
            hidden,
        })
    }

    /// Runs the cell over `steps` (each `n x input`) from a zero state and
    /// returns the last hidden state, `n x hidden`.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, steps: &[Var]) -> Result<Var> {
        let n = match steps.first() {
            Some(&x) => tape.value(x).rows(),
            None => 0,
        };
        let zero = super::Tensor::zeros(n, self.hidden);
        let mut h = tape.constant(zero.clone());
        let mut c = tape.constant(zero);
        for &x in steps {
            (h, c) = lstm_step(tape, store, self, x, h, c)?;
        }
        Ok(h)
    }
}

/// One LSTM step over a batch of rows; returns `(h, c)`.
pub fn lstm_step(
    tape: &mut Tape,
    store: &ParamStore,
    p: &LstmParams,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var)> {
    let w_ih = tape.param(store, p.w_ih);
    let w_hh = tape.param(store, p.w_hh);
    let b = tape.param(store, p.bias);
    let xi = tape.linear(x, w_ih, b)?;
    let hh = tape.matmul_t(h, w_hh)?;
    let gates = tape.add(xi, hh)?;
    let k = p.hidden;
    let i = tape.slice_cols(gates, 0, k)?;
    let f = tape.slice_cols(gates, k, k)?;
    let g = tape.slice_cols(gates, 2 * k, k)?;
    let o = tape.slice_cols(gates, 3 * k, k)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Gated recurrent update without gate biases; all matrices are
/// `hidden x hidden`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruParams {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub w: ParamId,
    pub u: ParamId,
}

impl GruParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut mat = |name: &str| {
            store.add(
                &format!("{prefix}.{name}"),
                hidden,
                hidden,
                Init::UniformFanIn,
                rng,
            )
        };
        Ok(Self {
            w_z: mat("w_z")?,
            u_z: mat("u_z")?,
            w_r: mat("w_r")?,
            u_r: mat("u_r")?,
            w: mat("w")?,
            u: mat("u")?,
        })
    }
}

/// Updates the rows of `h` given incoming messages `a` (same shape):
///
/// ```text
/// z  = σ(W_z a + U_z h)
/// r  = σ(W_r a + U_r h)
/// h' = tanh(W a + U (r ⊙ h))
/// out = (1 - z) ⊙ h + z ⊙ h'
/// ```
pub fn gru_gate(tape: &mut Tape, store: &ParamStore, p: &GruParams, a: Var, h: Var) -> Result<Var> {
    let lin = |tape: &mut Tape, id: ParamId, x: Var| {
        let w = tape.param(store, id);
        tape.matmul_t(x, w)
    };
    let za = lin(tape, p.w_z, a)?;
    let zh = lin(tape, p.u_z, h)?;
    let z = tape.add(za, zh)?;
    let z = tape.sigmoid(z);
    let ra = lin(tape, p.w_r, a)?;
    let rh = lin(tape, p.u_r, h)?;
    let r = tape.add(ra, rh)?;
    let r = tape.sigmoid(r);
    let rh = tape.mul(r, h)?;
    let ca = lin(tape, p.w, a)?;
    let ch = lin(tape, p.u, rh)?;
    let cand = tape.add(ca, ch)?;
    let cand = tape.tanh(cand);
    let keep = tape.one_minus(z);
    let old = tape.mul(keep, h)?;
    let new = tape.mul(z, cand)?;
    tape.add(old, new)
}
