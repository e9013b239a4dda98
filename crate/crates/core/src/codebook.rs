//! DFT beam codebooks and beam-domain quantities.
//!
//! A codebook of `n_beam` unit-norm beams is drawn from the `n_t`-point DFT
//! matrix by taking every `n_t / n_beam`-th column. Beam gains are matched-
//! filter powers `|h^H w_b|^2`; normalizing the gain vector yields the
//! ground-truth beam prior that the generative models learn to reproduce.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;

use crate::error::{Error, Result};
use crate::math::TAU;

/// Gains summing below this are treated as "no power reaches the user" and
/// mapped to the uniform prior with a zero-power flag.
pub const ZERO_POWER_FLOOR: f64 = 1e-20;

/// Unit-norm DFT beam codebook over an `n_t`-element ULA.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    n_t: usize,
    /// DFT column index of each beam, in beam order.
    steering: Vec<usize>,
    /// Beams stored row-major: `w[b]` is the length-`n_t` beamformer.
    w: Vec<Vec<Complex64>>,
}

/// Builds the codebook: beam `b` is DFT column `b * (n_t / n_beam)`, scaled
/// by `1/sqrt(n_t)` so every beam has unit norm. `n_beam` must divide `n_t`.
pub fn dft_codebook(n_t: usize, n_beam: usize) -> Result<Codebook> {
    if n_t == 0 || n_beam == 0 || n_t % n_beam != 0 {
        return Err(Error::Config(format!(
            "beam count must divide antenna count, got n_t={n_t} n_beam={n_beam}"
        )));
    }
    let stride = n_t / n_beam;
    let scale = 1.0 / (n_t as f64).sqrt();
    let mut w = Vec::with_capacity(n_beam);
    let mut steering = Vec::with_capacity(n_beam);
    for b in 0..n_beam {
        let k = b * stride;
        steering.push(k);
        let col: Vec<Complex64> = (0..n_t)
            .map(|m| {
                let phi = TAU * (k * m) as f64 / n_t as f64;
                Complex64::new(scale * phi.cos(), scale * phi.sin())
            })
            .collect();
        w.push(col);
    }
    Ok(Codebook { n_t, steering, w })
}

impl Codebook {
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_beam(&self) -> usize {
        self.w.len()
    }

    pub fn beam(&self, b: usize) -> &[Complex64] {
        &self.w[b]
    }

    /// DFT column indices backing each beam.
    pub fn steering_indices(&self) -> &[usize] {
        &self.steering
    }

    /// Steering direction of beam `b` in sine space for a given element
    /// spacing: `sin(theta_b) = k_eff / (n_t * spacing)` with the DFT index
    /// wrapped to `(-n_t/2, n_t/2]`.
    pub fn steering_sin(&self, b: usize, spacing_wl: f64) -> f64 {
        let k = self.steering[b];
        let k_eff = if k <= self.n_t / 2 {
            k as f64
        } else {
            k as f64 - self.n_t as f64
        };
        k_eff / (self.n_t as f64 * spacing_wl)
    }
}

/// Matched-filter beam gains `g_b = |h^H w_b|^2`.
pub fn beam_gains(h: &[Complex64], cb: &Codebook) -> Result<Vec<f64>> {
    if h.len() != cb.n_t {
        return Err(Error::Shape(format!(
            "channel has {} antennas, codebook expects {}",
            h.len(),
            cb.n_t
        )));
    }
    Ok(cb
        .w
        .iter()
        .map(|w| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (hm, wm) in h.iter().zip(w.iter()) {
                acc += hm.conj() * wm;
            }
            acc.norm_sqr()
        })
        .collect())
}

/// Probability vector over beams.
///
/// Invariants: entries are nonnegative and sum to one within 1e-12 of
/// construction. Obtainable from gains via [`beam_prior`] or from raw model
/// output via the samplers' normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamPrior(Vec<f64>);

impl BeamPrior {
    /// Validates and wraps a probability vector.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Contract(String::from("empty prior")));
        }
        if p.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Contract(String::from(
                "prior entries must be nonnegative and finite",
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("prior sums to {sum}, not 1")));
        }
        Ok(BeamPrior(p))
    }

    pub fn uniform(n: usize) -> Self {
        BeamPrior(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Highest-probability beam, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// First index of the maximum value.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Normalizes gains into a beam prior. Negative gains violate the contract;
/// a total below [`ZERO_POWER_FLOOR`] yields the uniform prior plus a
/// `zero_power` flag instead of dividing by (nearly) zero.
pub fn beam_prior(gains: &[f64]) -> Result<(BeamPrior, bool)> {
    if gains.is_empty() {
        return Err(Error::Contract(String::from("empty gain vector")));
    }
    if gains.iter().any(|&g| !(g >= 0.0)) {
        return Err(Error::Contract(String::from(
            "gains must be nonnegative and finite",
        )));
    }
    let sum: f64 = gains.iter().sum();
    if sum < ZERO_POWER_FLOOR {
        return Ok((BeamPrior::uniform(gains.len()), true));
    }
    Ok((BeamPrior(gains.iter().map(|g| g / sum).collect()), false))
}

/// Index of the strongest beam, lowest index on ties.
pub fn optimal_beam(gains: &[f64]) -> Result<usize> {
    if gains.is_empty() {
        return Err(Error::Contract(String::from("empty gain vector")));
    }
    if gains.iter().any(|&g| !(g >= 0.0)) {
        return Err(Error::Contract(String::from(
            "gains must be nonnegative and finite",
        )));
    }
    Ok(argmax(gains))
}
