//! The per-user record store: ground-truth priors plus side information for
//! every grid position, with a seeded user-level train/validation split.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::codebook::{beam_gains, beam_prior, optimal_beam, BeamPrior, Codebook};
use crate::error::{Error, Result};
use crate::exec::ParallelMap;
use crate::features::build_features;
use crate::rng::{self, Ns};
use crate::scene::{trace_paths, Scene, Vec3};

/// Which side of the train/validation split a record lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    /// Not split yet (freshly built dataset).
    Unsplit,
}

/// Everything the models and baselines need to know about one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeRecord {
    pub ue_id: usize,
    pub pos: Vec3,
    /// Full 7-entry conditioning vector; lower dims are prefixes.
    pub features: Vec<f64>,
    /// Matched-filter power per beam.
    pub gains: Vec<f64>,
    /// Normalized gains (uniform if no power reaches the user).
    pub prior: BeamPrior,
    /// Strongest beam index (lowest index on ties).
    pub best_beam: usize,
    pub los: bool,
    /// Number of surviving propagation paths.
    pub n_paths: usize,
    /// True when the gain total fell below the zero-power floor.
    pub zero_power: bool,
    pub split: Split,
}

impl UeRecord {
    /// Conditioning prefix of width `d`.
    pub fn features_d(&self, d: usize) -> &[f64] {
        &self.features[..d]
    }

    /// Azimuth of departure of the strongest path, radians; `None` when no
    /// path reaches the user. (Stored scaled by 1/pi in the feature vector.)
    pub fn strongest_aod(&self) -> Option<f64> {
        if self.n_paths == 0 {
            None
        } else {
            Some(self.features[6] * crate::math::PI)
        }
    }

    /// Azimuth of arrival of the strongest path, radians; `None` when no
    /// path reaches the user.
    pub fn strongest_aoa(&self) -> Option<f64> {
        if self.n_paths == 0 {
            None
        } else {
            Some(self.features[5] * crate::math::PI)
        }
    }
}

/// Dataset of user records plus the scene/codebook identity they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamDataset {
    pub n_t: usize,
    pub n_beam: usize,
    pub spacing_wl: f64,
    pub scene_seed: u64,
    pub records: Vec<UeRecord>,
}

impl BeamDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn train_records(&self) -> impl Iterator<Item = &UeRecord> {
        self.records.iter().filter(|r| r.split == Split::Train)
    }

    pub fn val_records(&self) -> impl Iterator<Item = &UeRecord> {
        self.records.iter().filter(|r| r.split == Split::Val)
    }

    pub fn los_count(&self) -> usize {
        self.records.iter().filter(|r| r.los).count()
    }

    pub fn zero_power_count(&self) -> usize {
        self.records.iter().filter(|r| r.zero_power).count()
    }
}

/// Builds one record per grid user: trace paths, synthesize the channel,
/// project onto the codebook, normalize the prior, extract features. Pure in
/// its inputs; the executor only distributes independent per-user work.
pub fn build_dataset<E: ParallelMap>(
    scene: &Scene,
    cb: &Codebook,
    exec: &E,
) -> Result<BeamDataset> {
    let cfg = &scene.config;
    if cb.n_t() != cfg.n_t || cb.n_beam() != cfg.n_beam {
        return Err(Error::Config(format!(
            "codebook is {}x{}, scene expects {}x{}",
            cb.n_t(),
            cb.n_beam(),
            cfg.n_t,
            cfg.n_beam
        )));
    }
    let ues = scene.ue_positions();
    let results = exec.map_indexed(ues.len(), &|ue_id| build_record(scene, cb, ue_id, ues[ue_id]));
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        records.push(r?);
    }
    Ok(BeamDataset {
        n_t: cfg.n_t,
        n_beam: cfg.n_beam,
        spacing_wl: cfg.spacing_wl,
        scene_seed: scene.seed,
        records,
    })
}

fn build_record(scene: &Scene, cb: &Codebook, ue_id: usize, pos: Vec3) -> Result<UeRecord> {
    let cfg = &scene.config;
    let paths = trace_paths(scene, pos)?;
    let h = crate::scene::synthesize_channel(&paths, cfg.n_t, cfg.spacing_wl)?;
    let gains = beam_gains(&h, cb)?;
    let (prior, zero_power) = beam_prior(&gains)?;
    let best_beam = optimal_beam(&gains)?;
    let features = build_features(pos, cfg.bs, &paths, 7)?;
    Ok(UeRecord {
        ue_id,
        pos,
        los: paths.iter().any(|p| p.is_los),
        n_paths: paths.len(),
        features,
        gains,
        prior,
        best_beam,
        zero_power,
        split: Split::Unsplit,
    })
}

/// Seeded user-level split: shuffles record indices and marks the first
/// `round(ratio * N)` (clamped so both sides stay nonempty) as training.
/// Re-running with the same seed reproduces the same assignment.
pub fn split_dataset(ds: &mut BeamDataset, train_ratio: f64, seed: u64) -> Result<()> {
    let n = ds.records.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "cannot split {n} records into two nonempty parts"
        )));
    }
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::Config(String::from(
            "train ratio must lie strictly between 0 and 1",
        )));
    }
    // Binds only in pure no_std builds; see the note in `math`.
    #[allow(unused_imports)]
    use crate::math::FloatExt;
    let n_train = ((train_ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng::substream(seed, Ns::Split, 0);
    rng::shuffle(&mut rng, &mut idx);
    for (rank, &i) in idx.iter().enumerate() {
        ds.records[i].split = if rank < n_train {
            Split::Train
        } else {
            Split::Val
        };
    }
    Ok(())
}
