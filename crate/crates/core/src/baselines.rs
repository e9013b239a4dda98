//! Reference prior generators the diffusion models are compared against:
//! a beam-index classifier, a prior regressor, a nearest-beam angle
//! heuristic, and the uniform/random floors.
//!
//! Both learned baselines share one trunk shape (two 256-wide ReLU layers)
//! and one training loop; they differ only in loss and in how raw outputs
//! become a prior (softmax for the classifier, clamp-and-normalize for the
//! regressor). The training loop follows the same determinism rules as the
//! denoiser trainer: serial per-epoch shuffles from a dedicated substream
//! and executor-chunked gradients reduced in index order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::dataset::UeRecord;
use crate::error::{Error, Result};
use crate::exec::{ParallelMap, CHUNK};
use crate::mat::Mat;
use crate::nn::{
    cross_entropy_grad, cross_entropy_loss, softmax, Activation, AdamW, AdamWConfig, DenseNet,
    NetGrads,
};
use crate::rng::{self, Ns};

// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;

const HIDDEN: usize = 256;

/// Which loss a learned baseline was trained with, and therefore how its
/// raw outputs are decoded into a prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Cross-entropy against the optimal beam index; softmax decoding.
    Classifier,
    /// Squared error against the true prior; clamp-and-normalize decoding.
    Regressor,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Classifier => "classifier",
            BaselineKind::Regressor => "regressor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classifier" => Ok(BaselineKind::Classifier),
            "regressor" => Ok(BaselineKind::Regressor),
            other => Err(Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

/// A trained comparison model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    kind: BaselineKind,
    d: usize,
    n_beam: usize,
    net: DenseNet,
}

/// Optimization hyperparameters for [`train_baseline`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for BaselineTrainConfig {
    fn default() -> Self {
        BaselineTrainConfig {
            epochs: 20,
            batch_size: 512,
            lr: 1e-3,
            weight_decay: 1e-2,
            seed: 0,
        }
    }
}

/// One supervised pair: standardized features, the optimal beam index, and
/// the true prior (classifier and regressor targets respectively).
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineExample {
    pub x_std: Vec<f64>,
    pub best_beam: usize,
    pub prior: Vec<f64>,
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_beam(&self) -> usize {
        self.n_beam
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Decodes one standardized feature vector into a prior.
    pub fn predict_prior(&self, x_std: &[f64]) -> Result<Vec<f64>> {
        if x_std.len() != self.d {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.d,
                x_std.len()
            )));
        }
        let (raw, _) = self.net.forward(x_std)?;
        match self.kind {
            BaselineKind::Classifier => softmax(&raw),
            BaselineKind::Regressor => {
                let mut p: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
                let sum: f64 = p.iter().sum();
                if !(sum >= 1e-9) {
                    return Ok(uniform_prior(self.n_beam));
                }
                for v in p.iter_mut() {
                    *v /= sum;
                }
                Ok(p)
            }
        }
    }
}

/// Trains a fresh baseline of the given kind and returns it with the
/// per-epoch mean training loss.
pub fn train_baseline<E: ParallelMap>(
    kind: BaselineKind,
    examples: &[BaselineExample],
    d: usize,
    n_beam: usize,
    cfg: &BaselineTrainConfig,
    exec: &E,
) -> Result<(BaselineModel, Vec<f64>)> {
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
    for (i, ex) in examples.iter().enumerate() {
        if ex.x_std.len() != d || ex.prior.len() != n_beam || ex.best_beam >= n_beam {
            return Err(Error::Shape(format!(
                "example {i} does not match d={d}, n_beam={n_beam}"
            )));
        }
    }

    let mut net = DenseNet::new(
        &[d, HIDDEN, HIDDEN, n_beam],
        &[Activation::Relu, Activation::Relu, Activation::Identity],
    )?;
    net.init_glorot(&mut rng::substream(cfg.seed, Ns::Init, 0));
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        &net.param_slices().iter().map(|s| s.len()).collect::<Vec<_>>(),
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
            let mut x = Mat::zeros(b, d);
            for (r, &id) in batch_ids.iter().enumerate() {
                x.row_mut(r).copy_from_slice(&examples[id].x_std);
            }

            let net_ref = &net;
            let n_chunks = b.div_ceil(CHUNK);
            let parts = exec.map_indexed(n_chunks, &|ci| -> Result<(f64, NetGrads)> {
                let lo = ci * CHUNK;
                let hi = (lo + CHUNK).min(b);
                let xc = Mat::from_rows(&(lo..hi).map(|r| x.row(r)).collect::<Vec<_>>());
                let (out, cache) = net_ref.forward_batch(&xc)?;
                let mut dout = Mat::zeros(out.rows(), out.cols());
                let mut loss = 0.0;
                for (r, &id) in batch_ids[lo..hi].iter().enumerate() {
                    let ex = &examples[id];
                    match kind {
                        BaselineKind::Classifier => {
                            // Mean-per-row cross entropy.
                            loss += cross_entropy_loss(out.row(r), ex.best_beam)? / b as f64;
                            let g = cross_entropy_grad(out.row(r), ex.best_beam)?;
                            for (dv, gv) in dout.row_mut(r).iter_mut().zip(g.iter()) {
                                *dv = gv / b as f64;
                            }
                        }
                        BaselineKind::Regressor => {
                            // Mean-per-element squared error over the batch.
                            let scale = 1.0 / (b * n_beam) as f64;
                            for ((dv, &ov), &tv) in dout
                                .row_mut(r)
                                .iter_mut()
                                .zip(out.row(r).iter())
                                .zip(ex.prior.iter())
                            {
                                let diff = ov - tv;
                                loss += diff * diff * scale;
                                *dv = 2.0 * diff * scale;
                            }
                        }
                    }
                }
                let (grads, _) = net_ref.backward_batch(&cache, &dout)?;
                Ok((loss, grads))
            });

            let mut grads = NetGrads::zeros_like(&net);
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

            let mut params = net.param_slices_mut();
            opt.step(&mut params, &grads.slices())?;
            step += 1;
            epoch_loss += batch_loss * b as f64;
        }
        trace.push(epoch_loss / n as f64);
    }

    Ok((
        BaselineModel {
            kind,
            d,
            n_beam,
            net,
        },
        trace,
    ))
}

/// Builds supervised pairs from records, mirroring the denoiser's
/// conditioning width and normalizer.
pub fn baseline_examples<'a>(
    records: impl IntoIterator<Item = &'a UeRecord>,
    d: usize,
    norm: &crate::features::FeatureNormalizer,
) -> Result<Vec<BaselineExample>> {
    let mut out = Vec::new();
    for rec in records {
        if d == 0 || d > rec.features.len() {
            return Err(Error::Config(format!(
                "conditioning width {d} outside 1..={}",
                rec.features.len()
            )));
        }
        out.push(BaselineExample {
            x_std: norm.apply(rec.features_d(d))?,
            best_beam: rec.best_beam,
            prior: rec.prior.as_slice().to_vec(),
        });
    }
    Ok(out)
}

/// Which strongest-path azimuth the angle heuristic reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleSource {
    /// Departure azimuth (transmit side, matching the transmit codebook).
    Aod,
    /// Arrival azimuth.
    Aoa,
}

impl Default for AngleSource {
    fn default() -> Self {
        AngleSource::Aod
    }
}

/// Angle heuristic: one-hot on the beam whose steering direction is nearest
/// to the strongest path's azimuth in sin-space (spatial frequency); users
/// without any path get the uniform prior.
pub fn aoa_prior(
    rec: &UeRecord,
    cb: &Codebook,
    spacing_wl: f64,
    source: AngleSource,
) -> Vec<f64> {
    let angle = match source {
        AngleSource::Aod => rec.strongest_aod(),
        AngleSource::Aoa => rec.strongest_aoa(),
    };
    let n = cb.n_beam();
    let Some(theta) = angle else {
        return uniform_prior(n);
    };
    let target = theta.sin();
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for b in 0..n {
        let dist = (cb.steering_sin(b, spacing_wl) - target).abs();
        if dist < best_dist {
            best_dist = dist;
            best = b;
        }
    }
    let mut p = vec![0.0; n];
    p[best] = 1.0;
    p
}

/// The uninformed floor: equal mass on every beam.
pub fn uniform_prior(n_beam: usize) -> Vec<f64> {
    vec![1.0 / n_beam as f64; n_beam]
}

/// A random point on the simplex: normalized exponentials of standard
/// normal draws.
pub fn random_prior(rng: &mut impl RngCore, n_beam: usize) -> Vec<f64> {
    let mut p = vec![0.0; n_beam];
    rng::fill_standard_normal(rng, &mut p);
    let mut sum = 0.0;
    for v in p.iter_mut() {
        *v = v.exp();
        sum += *v;
    }
    for v in p.iter_mut() {
        *v /= sum;
    }
    p
}
