//! Side-information vectors and feature standardization.
//!
//! Three nested conditioning levels describe a user:
//!
//! - 3D: position `[x, y, z]`
//! - 5D: + distance to the base station and a line-of-sight indicator
//! - 7D: + azimuth of arrival / departure of the strongest path, divided by
//!   pi so the entries land in `[-1, 1]`
//!
//! Lower-dimensional vectors are exact prefixes of higher ones. Features are
//! standardized with per-dimension mean/std fitted on the training split
//! only; constant dimensions keep std 1 so they map to zero.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;

use crate::error::{Error, Result};
use crate::math::PI;
use crate::scene::{Path, Vec3};

/// Supported conditioning dimensions.
pub const FEATURE_DIMS: [usize; 3] = [3, 5, 7];

/// Full 7-entry feature vector for a user; lower dims slice a prefix.
pub fn build_features(ue: Vec3, bs: Vec3, paths: &[Path], d: usize) -> Result<Vec<f64>> {
    if !FEATURE_DIMS.contains(&d) {
        return Err(Error::Config(format!(
            "unsupported conditioning dimension {d}, expected one of {FEATURE_DIMS:?}"
        )));
    }
    let mut x = Vec::with_capacity(d);
    x.push(ue.x);
    x.push(ue.y);
    x.push(ue.z);
    if d >= 5 {
        x.push(ue.dist(bs));
        let los = paths.iter().any(|p| p.is_los);
        x.push(if los { 1.0 } else { 0.0 });
    }
    if d >= 7 {
        // Angles of the strongest path (largest |gain|, lowest index on
        // ties); zero when no path reaches the user.
        let strongest = strongest_path(paths);
        let (aoa, aod) = strongest.map_or((0.0, 0.0), |p| (p.aoa_rad, p.aod_rad));
        x.push(aoa / PI);
        x.push(aod / PI);
    }
    Ok(x)
}

/// Strongest entry by amplitude; `None` for an empty list. Ties keep the
/// earliest path.
pub fn strongest_path(paths: &[Path]) -> Option<&Path> {
    let mut best: Option<(&Path, f64)> = None;
    for p in paths {
        let a = p.amplitude();
        match best {
            Some((_, amp)) if amp >= a => {}
            _ => best = Some((p, a)),
        }
    }
    best.map(|(p, _)| p)
}

/// Per-dimension affine standardizer fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl FeatureNormalizer {
    /// Fits mean and population standard deviation per dimension. Rows must
    /// be nonempty and share a width; a zero-variance dimension keeps std 1.
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = rows.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::Contract(String::from("cannot fit normalizer on zero rows")))?;
        let d = first.len();
        if d == 0 {
            return Err(Error::Contract(String::from("zero-width feature rows")));
        }
        let mut n = 1.0f64;
        let mut sum: Vec<f64> = first.to_vec();
        let mut sumsq: Vec<f64> = first.iter().map(|x| x * x).collect();
        for row in iter {
            if row.len() != d {
                return Err(Error::Shape(format!(
                    "ragged feature rows: {} vs {d}",
                    row.len()
                )));
            }
            n += 1.0;
            for (i, &x) in row.iter().enumerate() {
                sum[i] += x;
                sumsq[i] += x * x;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std: Vec<f64> = sumsq
            .iter()
            .zip(mean.iter())
            .map(|(sq, m)| {
                let var = (sq / n - m * m).max(0.0);
                let s = var.sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(FeatureNormalizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std`, also usable on any prefix of the fitted width.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() > self.mean.len() || x.is_empty() {
            return Err(Error::Shape(format!(
                "cannot standardize {} entries with a {}-dim normalizer",
                x.len(),
                self.mean.len()
            )));
        }
        Ok(x.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.mean[i]) / self.std[i])
            .collect())
    }

    /// Inverse of [`FeatureNormalizer::apply`].
    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() > self.mean.len() || z.is_empty() {
            return Err(Error::Shape(String::from(
                "standardized vector wider than the normalizer",
            )));
        }
        Ok(z.iter()
            .enumerate()
            .map(|(i, &v)| v * self.std[i] + self.mean[i])
            .collect())
    }
}
