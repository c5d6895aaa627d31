//! Desk-scale visual saliency laboratory.
//!
//! The crate layers a dense f64 tensor engine ([`tensor`]), reverse-mode
//! automatic differentiation ([`autodiff`]), the encoder-decoder generator
//! and convolutional discriminator ([`model`]), content and adversarial
//! losses ([`loss`]), AdaGrad two-phase training ([`train`]), a saliency
//! metric suite ([`metrics`]), and synthetic dataset generation plus file
//! I/O ([`data`]).

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradsuite;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Activation, Tensor};
