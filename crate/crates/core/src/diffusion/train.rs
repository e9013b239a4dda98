//! Denoiser training: noise-prediction regression over corrupted targets.
//!
//! Each step draws a timestep and a Gaussian noise vector per example,
//! corrupts the clean target through the closed-form forward process, and
//! regresses the network output onto the injected noise with mean-squared
//! error. Per-example draws are serial and batches are reduced in fixed
//! chunk order, so a run is bit-identical for a given seed no matter how
//! the executor schedules the chunks.

use alloc::format;
use alloc::vec::Vec;

use crate::dataset::UeRecord;
use crate::error::{Error, Result};
use crate::exec::{ParallelMap, CHUNK};
use crate::features::FeatureNormalizer;
use crate::mat::Mat;
use crate::nn::{AdamW, AdamWConfig};
use crate::rng::{self, Ns};

use super::denoiser::{Denoiser, DenoiserGrads};
use super::schedule::{forward_noise, NoiseSchedule};

/// One training pair: standardized side information and the clean target
/// `z0 = 2p - 1`, the beam prior mapped onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub x_std: Vec<f64>,
    pub z0: Vec<f64>,
}

/// Builds training pairs for conditioning width `d`. Accepts any record
/// iterator, e.g. [`crate::dataset::BeamDataset::train_records`].
pub fn training_set<'a>(
    records: impl IntoIterator<Item = &'a UeRecord>,
    d: usize,
    norm: &FeatureNormalizer,
) -> Result<Vec<TrainExample>> {
    let mut out = Vec::new();
    for rec in records {
        if d == 0 || d > rec.features.len() {
            return Err(Error::Config(format!(
                "conditioning width {d} outside 1..={}",
                rec.features.len()
            )));
        }
        let x_std = norm.apply(rec.features_d(d))?;
        let z0 = rec.prior.as_slice().iter().map(|&p| 2.0 * p - 1.0).collect();
        out.push(TrainExample { x_std, z0 });
    }
    Ok(out)
}

/// Optimization hyperparameters for [`train_denoiser`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 128,
            lr: 1e-3,
            weight_decay: 1e-2,
            seed: 0,
        }
    }
}

/// Trains `den` in place and returns the per-epoch mean training loss.
///
/// Epoch `e` draws its shuffle, timesteps, and noise from the dedicated
/// substream `(seed, Train, e)`; the executor only distributes gradient
/// chunks, whose partial sums are reduced in index order.
pub fn train_denoiser<E: ParallelMap>(
    den: &mut Denoiser,
    sched: &NoiseSchedule,
    examples: &[TrainExample],
    cfg: &TrainConfig,
    exec: &E,
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config(format!(
            "epochs and batch size must be positive, got {} and {}",
            cfg.epochs, cfg.batch_size
        )));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) || !(cfg.weight_decay >= 0.0) {
        return Err(Error::Config(format!(
            "bad optimizer settings: lr {} weight decay {}",
            cfg.lr, cfg.weight_decay
        )));
    }
    let n_beam = den.n_beam();
    let d = den.d();
    for (i, ex) in examples.iter().enumerate() {
        if ex.x_std.len() != d || ex.z0.len() != n_beam {
            return Err(Error::Shape(format!(
                "example {i} is {}x{}, denoiser expects {d}x{n_beam}",
                ex.x_std.len(),
                ex.z0.len()
            )));
        }
    }

    let slice_lens: Vec<usize> = den.param_slices().iter().map(|s| s.len()).collect();
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        &slice_lens,
    );

    let n = examples.len();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut erng = rng::substream(cfg.seed, Ns::Train, epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut erng, &mut order);

        let mut epoch_loss = 0.0;
        for batch_ids in order.chunks(cfg.batch_size) {
            let b = batch_ids.len();
            let mut y = Mat::zeros(b, n_beam);
            let mut x = Mat::zeros(b, d);
            let mut eps = Mat::zeros(b, n_beam);
            let mut ts = Vec::with_capacity(b);
            for (r, &id) in batch_ids.iter().enumerate() {
                let ex = &examples[id];
                let t = rng::rand_index(&mut erng, sched.t_steps());
                rng::fill_standard_normal(&mut erng, eps.row_mut(r));
                let y_t = forward_noise(&ex.z0, t, eps.row(r), sched)?;
                y.row_mut(r).copy_from_slice(&y_t);
                x.row_mut(r).copy_from_slice(&ex.x_std);
                ts.push(t);
            }

            // Loss = mean over the batch's b*n_beam entries of (pred - eps)^2,
            // so each chunk contributes scale-weighted partial loss/grads and
            // their in-order sum equals the full-batch quantities.
            let scale = 1.0 / (b * n_beam) as f64;
            let den_ref: &Denoiser = den;
            let n_chunks = b.div_ceil(CHUNK);
            let parts = exec.map_indexed(n_chunks, &|ci| -> Result<(f64, DenoiserGrads)> {
                let lo = ci * CHUNK;
                let hi = (lo + CHUNK).min(b);
                let yc = Mat::from_rows(&(lo..hi).map(|r| y.row(r)).collect::<Vec<_>>());
                let xc = Mat::from_rows(&(lo..hi).map(|r| x.row(r)).collect::<Vec<_>>());
                let (pred, cache) = den_ref.forward_batch(&yc, &xc, &ts[lo..hi])?;
                let mut dout = pred;
                let mut loss = 0.0;
                let eps_chunk = &eps.data()[lo * n_beam..hi * n_beam];
                for (p, &e) in dout.data_mut().iter_mut().zip(eps_chunk.iter()) {
                    let diff = *p - e;
                    loss += diff * diff * scale;
                    *p = 2.0 * diff * scale;
                }
                let grads = den_ref.backward_batch(&cache, &dout)?;
                Ok((loss, grads))
            });

            let mut grads = DenoiserGrads::zeros_like(den);
            let mut batch_loss = 0.0;
            for part in parts {
                let (l, g) = part?;
                batch_loss += l;
                grads.add_assign(&g);
            }
            if !batch_loss.is_finite() || !grads.max_abs().is_finite() {
                return Err(Error::Training {
                    epoch,
                    step,
                    msg: format!("non-finite loss {batch_loss} or gradient"),
                });
            }

            let mut params = den.param_slices_mut();
            opt.step(&mut params, &grads.slices())?;
            step += 1;
            epoch_loss += batch_loss * b as f64;
        }
        trace.push(epoch_loss / n as f64);
    }
    Ok(trace)
}
