//! Differentiable spherical-harmonics Lambertian image formation with matte
//! compositing, single-image intrinsic decomposition, a small disentangling
//! autoencoder, and latent-space editing procedures.

pub mod error;
pub mod cli;
pub mod edits;
pub mod formation;
pub mod gradcheck;
pub mod imaging;
pub mod losses;
pub mod optim;
pub mod shading;
pub mod solver;
pub mod synth;
pub mod toynet;

pub use error::{Error, Result};
