//! Graph-based market environment (GME) model for estimating the early
//! fundraising performance of crowdfunding projects before they launch.
//!
//! The crate is organised bottom-up:
//!
//! - [`market`]: projects, investment logs, day periods, target sets and
//!   market windows.
//! - [`features`]: static feature vectors, labels, hourly series and early
//!   funding scalars.
//! - [`graph`]: the pruned competition graph and the propagation tree.
//! - [`nn`]: a small dense-tensor engine with reverse-mode differentiation.
//! - [`model`]: the competition and evolution modules, readout, joint loss
//!   and training loop.
//! - [`eval`]: metrics, baselines and the experiment grid.
//! - [`synth`]: seeded synthetic markets.

pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod market;
pub mod model;
pub mod nn;
pub mod synth;

pub use error::{Error, Result};
