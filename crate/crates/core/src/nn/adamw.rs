//! AdamW optimizer with decoupled weight decay.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;
use crate::error::{Error, Result};

/// AdamW hyperparameters. Defaults: lr 1e-3, betas (0.9, 0.999), eps 1e-8,
/// weight decay 1e-2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Optimizer state: first/second moment estimates per parameter slice plus
/// the shared step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    /// Creates zeroed state for parameter slices of the given lengths.
    pub fn new(cfg: AdamWConfig, slice_lens: &[usize]) -> Self {
        AdamW {
            cfg,
            m: slice_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: slice_lens.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    /// One AdamW update over all parameter slices:
    ///
    /// ```text
    /// m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
    /// w <- w (1 - lr wd)            w <- w - lr (m-hat) / (sqrt(v-hat) + eps)
    /// ```
    ///
    /// with `m-hat = m / (1 - b1^t)` and `v-hat = v / (1 - b2^t)`. The decay
    /// is decoupled: it never enters the moment estimates.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} slices, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powf(t as f64);
        let bc2 = 1.0 - self.cfg.beta2.powf(t as f64);
        let decay = 1.0 - self.cfg.lr * self.cfg.weight_decay;
        for ((w, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if w.len() != m.len() || g.len() != m.len() {
                return Err(Error::Shape(format!(
                    "slice length mismatch: state {}, params {}, grads {}",
                    m.len(),
                    w.len(),
                    g.len()
                )));
            }
            for i in 0..m.len() {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] = w[i] * decay - self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}
