//! A small dense-tensor engine with tape-based reverse-mode differentiation,
//! enough for the GME network: linear maps, recurrent cells, attention,
//! dropout, absolute-error loss and SGD with exponential decay.

mod cells;
mod checkpoint;
pub mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use cells::{gru_gate, lstm_step, GruParams, LstmParams, LEAKY_SLOPE};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_VERSION,
};
pub use optim::{sgd_step, ExponentialDecay};
pub use params::{Init, Param, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
