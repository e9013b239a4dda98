//! Error type shared across the crate.

use alloc::string::String;

/// Crate-wide error enum. Variants map onto the failure classes surfaced by
/// the CLI: configuration, data/shape, geometry, and numeric/training.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value (dimensions, ratios, schedule bounds, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// Tensor/vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A cached forward pass does not match the network it is replayed on.
    #[error("stale cache: {0}")]
    Cache(String),
    /// Degenerate geometry (e.g. transmitter and receiver co-located).
    #[error("geometry error: {0}")]
    Geometry(String),
    /// A caller violated a documented precondition (e.g. negative gains).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Non-finite values encountered outside training.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Training produced a non-finite loss; reports where it happened.
    #[error("training diverged at epoch {epoch}, step {step}: {msg}")]
    Training {
        epoch: usize,
        step: usize,
        msg: String,
    },
}

pub type Result<T> = core::result::Result<T, Error>;
