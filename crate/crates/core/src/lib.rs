//! Spiking neural networks of leaky integrate-and-fire units, trained by
//! backpropagation through time with a surrogate derivative for the spike.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`autodiff`]: dense arrays and a define-by-run tape with
//!   custom backward rules.
//! - [`lif`]: the LIF layer, closed-form gradients and firing-rate analytics.
//! - [`layers`], [`network`]: dense/LSTM/dropout layers and the two
//!   LIF + recurrent-readout architectures.
//! - [`optim`], [`train`]: optimizers, loss, metrics and the training loop.
//! - [`data`]: column-wise image encoding, PNG loading and a synthetic
//!   grating dataset.
//! - [`artifacts`]: config files, metrics tables, checkpoints and explorer
//!   bundles.

pub mod artifacts;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod layers;
pub mod lif;
pub mod network;
pub mod optim;
pub mod parallel;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
