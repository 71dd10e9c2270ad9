//! Spatio-temporal joint graph convolutional networks for traffic forecasting.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`], [`autodiff`], [`batchnorm`], [`optim`], [`gradcheck`]: dense
//!   arrays, a reverse-mode tape, batch normalisation, Adam, and
//!   finite-difference checking.
//! - [`graph`]: distance-based and embedding-based joint adjacency matrices
//!   linking nodes across time steps.
//! - [`model`]: dilated causal joint graph convolution layers, gated fusion
//!   of the two graph branches, attention over layer outputs, and one output
//!   head per forecast horizon.
//! - [`train`]: Z-score normalisation, chronological windowing, the MAE+MAPE
//!   loss, metrics, and the training loop.
//! - [`data`]: dataset and distance-file IO, calendars, synthetic data, and
//!   run configuration.
//! - [`cli`]: the command implementations behind the `stjgcn` binary.

pub mod autodiff;
pub mod batchnorm;
pub mod error;
pub mod gradcheck;
pub mod optim;
pub mod oracle;
pub mod tensor;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
pub mod data;
pub mod graph;
pub mod params;
pub mod model;
pub mod train;
pub mod cli;
