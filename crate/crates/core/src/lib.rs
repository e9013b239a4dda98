//! Desk-scale mmWave beam alignment with diffusion-generated beam priors.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: a small dense-network engine (batched forward/backward, AdamW,
//!   sinusoidal timestep embeddings, losses) with finite-difference-checked
//!   gradients.
//! - [`scene`] / [`codebook`]: geometric multipath channel synthesis over a
//!   UE grid and DFT beam codebooks with gain/prior extraction.
//! - [`features`] / [`dataset`]: side-information vectors (3D/5D/7D), feature
//!   standardization, and the record store with a seeded train/val split.
//! - [`diffusion`] / [`sampler`]: conditional denoising-diffusion training
//!   (epsilon prediction) and DDPM/DDIM reverse samplers that produce beam
//!   priors from side information.
//! - [`baselines`] / [`metrics`]: classifier/regressor/AoA/uniform/random
//!   reference models and Hit@k / SNR-ratio@k evaluation.
//!
//! Everything is `no_std + alloc` and deterministic: all randomness flows
//! through seeded [`rng`] streams, and parallel execution (via [`exec`])
//! reduces in a fixed chunk order so results are independent of worker count.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod baselines;
pub mod codebook;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod exec;
pub mod features;
pub mod mat;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod scene;

pub use error::{Error, Result};
/// Complex scalar used for channels and path gains, re-exported so
/// downstream crates construct [`scene::Path`] values against the same
/// `num-complex` version.
pub use num_complex::Complex64;
