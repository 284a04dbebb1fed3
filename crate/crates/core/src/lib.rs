//! Forecast-then-classify network for multichannel time series.
//!
//! An LSTM encoder turns each subject's channel-by-time matrix into a
//! sequence of embeddings. A two-layer LSTM decoder forecasts the signal one
//! lag ahead from those embeddings, and a multihead attentional pooling layer
//! followed by a small dense head turns the same embeddings into a class
//! probability. Training minimizes binary cross-entropy plus a scaled
//! frequency-domain forecast loss. Per-channel predictability
//! (`1 - MSE / Var`) of the forecast ranks channels by how well the past of
//! the whole system explains them.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, checkpoints and the
//! command-line interface live in the `grangernet` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod cpm;
pub mod cv;
pub mod data;
pub mod error;
pub mod fourier;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod train;
pub mod var;

mod fmath;

pub use error::{Error, Result};
pub use linalg::Matrix;
