//! Reverse-process samplers: from Gaussian noise to a beam prior.
//!
//! Two samplers share the trained noise predictor. The ancestral sampler
//! walks every schedule step with the posterior variance `sigma_t^2`; the
//! accelerated sampler walks an evenly spaced sub-ladder and supports the
//! usual `eta` interpolation between deterministic (`eta = 0`) and
//! ancestral-like behaviour.
//!
//! Batched variants run many users in lockstep. They draw each row's noise
//! from that row's own stream in row order, and the denoiser contract makes
//! batched predictions bitwise equal to single-row ones, so a row's result
//! is identical whether it is sampled alone or inside any batch.
//!
//! Raw samples live in the signed target space; [`normalize_prior`] maps
//! them back onto the probability simplex.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::diffusion::{Denoise, NoiseSchedule};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng;

// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;

/// Total probability mass below which a decoded prior is replaced by the
/// uniform distribution.
pub const PRIOR_MASS_FLOOR: f64 = 1e-9;

/// Reverse-process family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Ddpm => "ddpm",
            SamplerKind::Ddim => "ddim",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(SamplerKind::Ddpm),
            "ddim" => Ok(SamplerKind::Ddim),
            other => Err(Error::Config(format!("unknown sampler {other:?}"))),
        }
    }
}

/// How to turn a denoiser into a prior: which reverse process, how many
/// ladder steps (accelerated sampler only), the noise interpolation `eta`,
/// and how many raw samples to average per user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub ddim_steps: usize,
    pub eta: f64,
    pub n_samples: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Ddpm,
            ddim_steps: 50,
            eta: 0.0,
            n_samples: 1,
        }
    }
}

/// Evenly spaced timestep sub-ladder `t_i = floor(i * T / steps)`,
/// `i = 0..steps`. Strictly increasing and always anchored at `t = 0`.
pub fn ddim_ladder(t_steps: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > t_steps {
        return Err(Error::Config(format!(
            "ladder needs 1..={t_steps} steps, got {steps}"
        )));
    }
    Ok((0..steps).map(|i| i * t_steps / steps).collect())
}

fn check_rows(x: &Mat, rngs_len: usize) -> Result<()> {
    if x.rows() != rngs_len {
        return Err(Error::Shape(format!(
            "{} condition rows but {rngs_len} sample streams",
            x.rows()
        )));
    }
    Ok(())
}

/// Draws each row's starting noise from its own stream.
fn init_noise<R: RngCore>(rows: usize, k: usize, rngs: &mut [R]) -> Mat {
    let mut y = Mat::zeros(rows, k);
    for (r, rng) in rngs.iter_mut().enumerate() {
        rng::fill_standard_normal(rng, y.row_mut(r));
    }
    y
}

/// Ancestral sampling over every schedule step, one user per row and one
/// noise stream per row. Returns raw signed-space samples.
pub fn ddpm_sample_batch<D: Denoise, R: RngCore>(
    den: &D,
    sched: &NoiseSchedule,
    x: &Mat,
    rngs: &mut [R],
) -> Result<Mat> {
    check_rows(x, rngs.len())?;
    let n = x.rows();
    let k = den.n_beam();
    if n == 0 {
        return Ok(Mat::zeros(0, k));
    }
    let mut y = init_noise(n, k, rngs);
    let mut ts = vec![0usize; n];
    let mut z = vec![0.0; k];
    for t in (0..sched.t_steps()).rev() {
        ts.iter_mut().for_each(|v| *v = t);
        let eps = den.predict_noise_batch(&y, x, &ts)?;
        let coeff = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
        let inv_sqrt_a = 1.0 / sched.alpha(t).sqrt();
        for r in 0..n {
            let er = eps.row(r);
            for (yi, &ei) in y.row_mut(r).iter_mut().zip(er.iter()) {
                *yi = (*yi - coeff * ei) * inv_sqrt_a;
            }
        }
        // The final step (t = 0) is deterministic: sigma_0^2 = 0.
        if t > 0 {
            let sigma = sched.sigma2(t).sqrt();
            for (r, rng) in rngs.iter_mut().enumerate() {
                rng::fill_standard_normal(rng, &mut z);
                for (yi, &zi) in y.row_mut(r).iter_mut().zip(z.iter()) {
                    *yi += sigma * zi;
                }
            }
        }
    }
    Ok(y)
}

/// Accelerated sampling over an evenly spaced sub-ladder. With `eta = 0`
/// the walk is deterministic given the starting noise; `eta > 0` re-injects
/// a fraction of the posterior noise at every step except the last.
pub fn ddim_sample_batch<D: Denoise, R: RngCore>(
    den: &D,
    sched: &NoiseSchedule,
    x: &Mat,
    steps: usize,
    eta: f64,
    rngs: &mut [R],
) -> Result<Mat> {
    check_rows(x, rngs.len())?;
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::Config(format!("eta must be finite and >= 0, got {eta}")));
    }
    let ladder = ddim_ladder(sched.t_steps(), steps)?;
    let n = x.rows();
    let k = den.n_beam();
    if n == 0 {
        return Ok(Mat::zeros(0, k));
    }
    let mut y = init_noise(n, k, rngs);
    let mut ts = vec![0usize; n];
    let mut z = vec![0.0; k];
    for i in (0..steps).rev() {
        let t = ladder[i];
        let ab_t = sched.alpha_bar(t);
        let ab_prev = if i > 0 { sched.alpha_bar(ladder[i - 1]) } else { 1.0 };
        ts.iter_mut().for_each(|v| *v = t);
        let eps = den.predict_noise_batch(&y, x, &ts)?;

        let sigma2 = eta * eta * (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev);
        let dir = (1.0 - ab_prev - sigma2).max(0.0).sqrt();
        let sqrt_ab_prev = ab_prev.sqrt();
        let sqrt_one_minus_ab_t = (1.0 - ab_t).sqrt();
        let inv_sqrt_ab_t = 1.0 / ab_t.sqrt();
        for r in 0..n {
            let er = eps.row(r);
            for (yi, &ei) in y.row_mut(r).iter_mut().zip(er.iter()) {
                let y0_hat = (*yi - sqrt_one_minus_ab_t * ei) * inv_sqrt_ab_t;
                *yi = sqrt_ab_prev * y0_hat + dir * ei;
            }
        }
        if sigma2 > 0.0 {
            let sigma = sigma2.sqrt();
            for (r, rng) in rngs.iter_mut().enumerate() {
                rng::fill_standard_normal(rng, &mut z);
                for (yi, &zi) in y.row_mut(r).iter_mut().zip(z.iter()) {
                    *yi += sigma * zi;
                }
            }
        }
    }
    Ok(y)
}

/// Single-user ancestral sampling; bitwise equal to the batched variant.
pub fn ddpm_sample<D: Denoise>(
    den: &D,
    sched: &NoiseSchedule,
    x_std: &[f64],
    rng: &mut impl RngCore,
) -> Result<Vec<f64>> {
    let x = Mat::from_rows(&[x_std]);
    let y = ddpm_sample_batch(den, sched, &x, core::slice::from_mut(rng))?;
    Ok(y.row(0).to_vec())
}

/// Single-user accelerated sampling; bitwise equal to the batched variant.
pub fn ddim_sample<D: Denoise>(
    den: &D,
    sched: &NoiseSchedule,
    x_std: &[f64],
    steps: usize,
    eta: f64,
    rng: &mut impl RngCore,
) -> Result<Vec<f64>> {
    let x = Mat::from_rows(&[x_std]);
    let y = ddim_sample_batch(den, sched, &x, steps, eta, core::slice::from_mut(rng))?;
    Ok(y.row(0).to_vec())
}

/// Maps a raw signed-space sample back onto the probability simplex:
/// `(y + 1) / 2` per beam, clamped into `[0, 1]`, then L1-normalized.
/// Returns the uniform prior (flagged) when almost no mass survives.
pub fn normalize_prior(y0: &[f64]) -> (Vec<f64>, bool) {
    if y0.is_empty() {
        return (Vec::new(), true);
    }
    let mut p: Vec<f64> = y0.iter().map(|&y| ((y + 1.0) / 2.0).clamp(0.0, 1.0)).collect();
    let sum: f64 = p.iter().sum();
    if !(sum >= PRIOR_MASS_FLOOR) {
        let n = p.len();
        return (vec![1.0 / n as f64; n], true);
    }
    for v in p.iter_mut() {
        *v /= sum;
    }
    (p, false)
}

/// Samples `n_samples` priors for one user and averages them. The flag is
/// set when any sample needed the uniform fallback.
pub fn sample_prior<D: Denoise>(
    den: &D,
    sched: &NoiseSchedule,
    x_std: &[f64],
    cfg: &SamplerConfig,
    rng: &mut impl RngCore,
) -> Result<(Vec<f64>, bool)> {
    let x = Mat::from_rows(&[x_std]);
    let (p, flags) = sample_priors_batch(den, sched, &x, cfg, core::slice::from_mut(rng))?;
    Ok((p.row(0).to_vec(), flags[0]))
}

/// Batched [`sample_prior`]: one row and one noise stream per user. Row `r`
/// of the result is bitwise what [`sample_prior`] returns for that user's
/// condition and stream.
pub fn sample_priors_batch<D: Denoise, R: RngCore>(
    den: &D,
    sched: &NoiseSchedule,
    x: &Mat,
    cfg: &SamplerConfig,
    rngs: &mut [R],
) -> Result<(Mat, Vec<bool>)> {
    if cfg.n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let n = x.rows();
    let k = den.n_beam();
    let mut acc = Mat::zeros(n, k);
    let mut fallback = vec![false; n];
    for _ in 0..cfg.n_samples {
        let raw = match cfg.kind {
            SamplerKind::Ddpm => ddpm_sample_batch(den, sched, x, rngs)?,
            SamplerKind::Ddim => {
                ddim_sample_batch(den, sched, x, cfg.ddim_steps, cfg.eta, rngs)?
            }
        };
        for r in 0..n {
            let (p, fb) = normalize_prior(raw.row(r));
            fallback[r] = fallback[r] || fb;
            for (a, &pi) in acc.row_mut(r).iter_mut().zip(p.iter()) {
                *a += pi;
            }
        }
    }
    if cfg.n_samples > 1 {
        let inv = 1.0 / cfg.n_samples as f64;
        for v in acc.data_mut() {
            *v *= inv;
        }
    }
    Ok((acc, fallback))
}
