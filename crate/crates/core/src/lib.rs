//! Desk-scale GAN laboratory.
//!
//! Dense generator/discriminator pairs are trained adversarially on toy data
//! (a 2D Gaussian ring or 16x16 face sprites), then the generator is
//! fine-tuned against the frozen discriminator with the objective turned
//! around, so it chases samples the discriminator calls fake. The crate
//! records what happens along the way: the generator drifts off the data,
//! its gradients blow up, and its output collapses toward a single sample.
//!
//! Everything is `f64` and a deterministic function of the configured seed.

// `!(x > 0.0)` is how NaN gets rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod finetune;
pub mod losses;
pub mod metrics;
pub mod render;
pub mod report;
pub mod rng;
pub mod train;

pub use error::{Error, FormatError, Result};
