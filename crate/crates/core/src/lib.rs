//! Adaptability-aware sample generation for data-free quantization.
//!
//! A label-conditioned generator G and a fake-quantized network Q play a
//! zero-sum game over the adaptability of generated samples, measured against
//! a frozen full-precision network P:
//!
//! - [`engine`]: dense tensors, reverse-mode tape, batch norm, optimizers.
//! - [`quant`]: min/max linear quantizer with straight-through gradients.
//! - [`nets`]: P, Q and G, pretraining and checkpoints.
//! - [`adapt`]: disagreement/agreement distributions, normalized entropy,
//!   the game value and balance-gap diagnostics.
//! - [`game`]: the generator and calibration losses and the alternating loop.
//! - [`xp`]: synthetic data, configuration, orchestration and metrics files.

pub mod adapt;
pub mod engine;
pub mod error;
pub mod game;
pub mod nets;
pub mod quant;
pub mod xp;

pub use error::{Error, Result};
