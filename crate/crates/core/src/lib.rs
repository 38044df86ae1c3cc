//! Output-space calibration of simulation predictions by transfer learning.
//!
//! An autoencoder is trained to reconstruct simulated diagnostic observables.
//! Its final two decoder layers are then retrained on a small, chronologically
//! ordered set of experiments so that it decodes to *measured* observables
//! instead. The resulting network is a corrective map from simulation
//! outputs to data-informed experimental expectations.
//!
//! Modules, bottom-up:
//!
//! - [`numcore`]: dense matrices/vectors and a seeded, platform-independent RNG.
//! - [`network`]: feed-forward MLP, backpropagation, Adam, layer freezing.
//! - [`datagen`]: synthetic simulation/experiment surrogate.
//! - [`calibration`]: autoencoder construction, base training, transfer, learning curves.
//! - [`evaluation`]: explained variance and mean relative error reports.
//! - [`cli`]: run configuration, CSV and model-file persistence, commands.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod network;
pub mod numcore;

pub use error::{Error, Result};
