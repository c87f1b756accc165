//! Link-level simulation of a MIMO visible-light link received through a
//! tunable liquid convex lens and a photodiode array.
//!
//! Modules build on each other from the bottom up:
//!
//! * [`geometry`]: receiver and lens frames, and world positions.
//! * [`optics`]: LoS gain, refraction and the imaging channel matrix.
//! * [`gsm`]: the spatial-modulation codebook and ML detection.
//! * [`ber`]: the union bound, plus a seeded Monte Carlo estimate.
//! * [`dynamics`]: clothoid walks with AR(1) polar angles.
//! * [`optimizers`]: the lens-selection schemes.

pub mod ber;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod gsm;
pub mod optics;
pub mod optimizers;

pub use error::{Error, Result};
