//! Sinusoidal timestep embeddings.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;
use crate::error::{Error, Result};

const BASE: f64 = 10_000.0;

/// Sinusoidal embedding of an integer timestep.
///
/// Layout is `[sin(f_0 t), ..., sin(f_{h-1} t), cos(f_0 t), ..., cos(f_{h-1} t)]`
/// with `h = dim / 2` and geometrically spaced frequencies
/// `f_i = BASE^(-i / h)`, so `f_0 = 1` and the slowest frequency approaches
/// `1/BASE`. `dim` must be even and nonzero. The map is pure: equal inputs
/// give equal embeddings.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Config(format!(
            "embedding dimension must be even and nonzero, got {dim}"
        )));
    }
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    let t = t as f64;
    for i in 0..half {
        let freq = BASE.powf(-(i as f64) / half as f64);
        out[i] = (freq * t).sin();
        out[half + i] = (freq * t).cos();
    }
    Ok(out)
}
