//! Linear-beta noise schedule and the closed-form forward corruption.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;

use crate::error::{Error, Result};

pub const DEFAULT_T_STEPS: usize = 500;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// The three numbers that determine a linear schedule; stored in checkpoints
/// and rebuilt exactly on load. Fields left out of a serialized document
/// fall back to the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleSpec {
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            t_steps: DEFAULT_T_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

/// Precomputed per-step quantities of a variance schedule.
///
/// Invariants (checked by tests): betas increase strictly inside `(0, 1)`,
/// `alpha_bar` decreases strictly inside `(0, 1)`, `sigma2[0] = 0`, and
/// `sigma2[t] = beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    spec: ScheduleSpec,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma2: Vec<f64>,
}

/// Builds the linear schedule `beta_t = start + (end - start) * t / (T - 1)`
/// (a single step uses `start` alone).
pub fn linear_schedule(spec: ScheduleSpec) -> Result<NoiseSchedule> {
    let t_steps = spec.t_steps;
    if t_steps == 0 {
        return Err(Error::Config(String::from("schedule needs t_steps >= 1")));
    }
    if !(spec.beta_start > 0.0) || !(spec.beta_end < 1.0) || spec.beta_start > spec.beta_end {
        return Err(Error::Config(format!(
            "betas must satisfy 0 < start <= end < 1, got {} .. {}",
            spec.beta_start, spec.beta_end
        )));
    }
    if t_steps > 1 && spec.beta_start == spec.beta_end {
        return Err(Error::Config(String::from(
            "a multi-step schedule needs strictly increasing betas",
        )));
    }
    let mut beta = Vec::with_capacity(t_steps);
    let mut alpha = Vec::with_capacity(t_steps);
    let mut alpha_bar = Vec::with_capacity(t_steps);
    let mut sigma2 = Vec::with_capacity(t_steps);
    let mut bar = 1.0f64;
    for t in 0..t_steps {
        let b = if t_steps == 1 {
            spec.beta_start
        } else {
            spec.beta_start + (spec.beta_end - spec.beta_start) * t as f64 / (t_steps - 1) as f64
        };
        let prev_bar = bar;
        let a = 1.0 - b;
        bar *= a;
        beta.push(b);
        alpha.push(a);
        alpha_bar.push(bar);
        // Posterior variance of y_{t-1} | y_t, y_0; zero at t = 0 where the
        // chain starts from the clean signal (1 - alpha_bar_{-1} = 0).
        sigma2.push(if t == 0 {
            0.0
        } else {
            b * (1.0 - prev_bar) / (1.0 - bar)
        });
    }
    Ok(NoiseSchedule {
        spec,
        beta,
        alpha,
        alpha_bar,
        sigma2,
    })
}

impl NoiseSchedule {
    pub fn spec(&self) -> ScheduleSpec {
        self.spec
    }

    pub fn t_steps(&self) -> usize {
        self.spec.t_steps
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// `alpha_bar_{t-1}`, defined as 1 at `t = 0`.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn sigma2(&self, t: usize) -> f64 {
        self.sigma2[t]
    }
}

/// Closed-form forward corruption:
/// `y_t = sqrt(alpha_bar_t) y_0 + sqrt(1 - alpha_bar_t) eps`.
pub fn forward_noise(y0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    if t >= sched.t_steps() {
        return Err(Error::Config(format!(
            "timestep {t} out of range for a {}-step schedule",
            sched.t_steps()
        )));
    }
    if y0.len() != eps.len() || y0.is_empty() {
        return Err(Error::Shape(String::from(
            "signal and noise must share a nonzero length",
        )));
    }
    let a = sched.alpha_bar(t).sqrt();
    let s = (1.0 - sched.alpha_bar(t)).sqrt();
    Ok(y0
        .iter()
        .zip(eps.iter())
        .map(|(y, e)| a * y + s * e)
        .collect())
}
