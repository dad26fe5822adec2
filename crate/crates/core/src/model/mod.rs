//! The GME network: the competition module (PCM), the evolution module
//! (MET), readout, joint loss, ablations and the training loop.

mod config;
mod inputs;
mod network;
mod train;

pub use config::{Ablation, TrainConfig};
pub use inputs::{InputScaling, MarketContext, PrepareOptions, WindowInputs, HISTORY_STEPS};
pub use network::{joint_loss, Forward, GmeModel, MetOutput, ModelSpec, PcmOutput};
pub use train::{evaluate, init_model, mean_label, train, train_model, EpochRecord, History};
pub(crate) use train::{rng_stream, INIT_STREAM};
