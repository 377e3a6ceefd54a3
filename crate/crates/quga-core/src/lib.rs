//! Hybrid quantum-classical GAN for 4-port sea-distance graphs.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`sim`]: noiseless statevector simulation of the quantum generators,
//!   including parameter-shift and adjoint differentiation.
//! - [`nn`]: a minimal dense network engine (forward, backprop, BCE, Adam)
//!   for the discriminator and the classical generator.
//! - [`data`]: port ingestion, great-circle distances, and construction of
//!   the normalized 4-port graph training corpus.
//! - [`gan`]: the adversarial training loop wiring either generator against
//!   the shared discriminator, with per-epoch metrics.
//! - [`eval`]: triangle-inequality validation, weight statistics, density
//!   histograms, and the KDE random-sampling baseline.

pub mod data;
pub mod eval;
pub mod gan;
pub mod nn;
pub mod sim;
