//! Uncertainty-aware visuomotor navigation at desk scale.
//!
//! A cross-modal VAE compresses 16x16 gate-camera frames into a 10-d Gaussian
//! latent. An ensemble of heteroscedastic policies maps latents to velocity
//! commands, and the predictive distribution of a command is obtained by
//! sampling the latent and moment-matching the resulting Gaussian mixture.
//! A small gate-track simulator closes the loop.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod nn;
pub mod perception;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod uq;

pub use error::{Error, Result};
