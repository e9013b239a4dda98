//! Fully connected networks with hand-written batched backpropagation.
//!
//! Weights are stored row-major as `[out_dim x in_dim]` so both the forward
//! dot products and the backward accumulations run over contiguous slices.
//! All passes are pure: `forward_batch` returns a cache of activations which
//! `backward_batch` consumes without mutating the network.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::u01;

/// Activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

/// One affine layer with its activation tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[out_dim x in_dim]`, row-major: `w[o * in_dim + k]`.
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) act: Activation,
}

impl Layer {
    fn new(in_dim: usize, out_dim: usize, act: Activation) -> Self {
        Layer {
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
            act,
        }
    }

    fn glorot_init(&mut self, rng: &mut impl RngCore) {
        // Glorot/Xavier uniform: +-sqrt(6 / (fan_in + fan_out)); biases zero.
        let limit = (6.0 / (self.in_dim + self.out_dim) as f64).sqrt();
        for w in self.w.iter_mut() {
            *w = (2.0 * u01(rng) - 1.0) * limit;
        }
    }

    fn forward_batch(&self, x: &Mat) -> Mat {
        debug_assert_eq!(x.cols(), self.in_dim);
        let mut out = Mat::zeros(x.rows(), self.out_dim);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let or = out.row_mut(r);
            for o in 0..self.out_dim {
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.b[o];
                for k in 0..self.in_dim {
                    acc += xr[k] * wrow[k];
                }
                or[o] = acc;
            }
        }
        if self.act == Activation::Relu {
            for v in out.data_mut().iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        out
    }

    /// Backward through this layer given its input `x`, post-activation
    /// output `a`, and the gradient `dout` w.r.t. that output.
    fn backward_batch(&self, x: &Mat, a: &Mat, dout: &Mat) -> (Vec<f64>, Vec<f64>, Mat) {
        debug_assert_eq!(x.cols(), self.in_dim);
        debug_assert_eq!(dout.cols(), self.out_dim);
        // dz = dout * act'(z); for ReLU the mask is (a > 0).
        let mut dz = dout.clone();
        if self.act == Activation::Relu {
            for (g, &av) in dz.data_mut().iter_mut().zip(a.data().iter()) {
                if av <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let mut dw = vec![0.0; self.w.len()];
        let mut db = vec![0.0; self.out_dim];
        let mut dx = Mat::zeros(x.rows(), self.in_dim);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let dzr = dz.row(r);
            let dxr = dx.row_mut(r);
            for o in 0..self.out_dim {
                let g = dzr[o];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                let dwrow = &mut dw[o * self.in_dim..(o + 1) * self.in_dim];
                for k in 0..self.in_dim {
                    dwrow[k] += g * xr[k];
                    dxr[k] += g * wrow[k];
                }
            }
        }
        (dw, db, dx)
    }
}

/// Feed-forward network: an ordered list of [`Layer`]s plus the total
/// parameter count recorded at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
    param_count: usize,
}

/// Activations recorded by a forward pass: `acts[0]` is the input batch and
/// `acts[i]` the post-activation output of layer `i - 1`.
#[derive(Debug, Clone)]
pub struct BatchCache {
    acts: Vec<Mat>,
}

impl BatchCache {
    /// Output of the cached forward pass.
    pub fn output(&self) -> &Mat {
        self.acts.last().expect("cache always holds the input")
    }
}

/// Per-layer parameter gradients, shaped exactly like the network's weights
/// and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    dw: Vec<Vec<f64>>,
    db: Vec<Vec<f64>>,
}

impl NetGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        NetGrads {
            dw: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            db: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    /// Accumulates `other` into `self` (used for chunked reductions and
    /// skip-connection joins).
    pub fn add_assign(&mut self, other: &NetGrads) {
        assert_eq!(self.dw.len(), other.dw.len(), "gradient layer count");
        for (a, b) in self.dw.iter_mut().zip(other.dw.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += *y;
            }
        }
        for (a, b) in self.db.iter_mut().zip(other.db.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.dw.iter_mut().flat_map(|v| v.iter_mut()) {
            *v *= s;
        }
        for v in self.db.iter_mut().flat_map(|v| v.iter_mut()) {
            *v *= s;
        }
    }

    /// Flat view in the same order as [`DenseNet::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.dw.len());
        for (w, b) in self.dw.iter().zip(self.db.iter()) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for v in self.slices().iter().flat_map(|s| s.iter()) {
            m = m.max(v.abs());
        }
        m
    }
}

impl DenseNet {
    /// Builds a network with the given layer widths and activations.
    /// `dims` has one more entry than `acts`: `dims = [in, h1, ..., out]`.
    /// Weights start at zero; call [`DenseNet::init_glorot`] to randomize.
    pub fn new(dims: &[usize], acts: &[Activation]) -> Result<Self> {
        if dims.len() < 2 || acts.len() != dims.len() - 1 {
            return Err(Error::Config(format!(
                "network needs >= 2 dims and one activation per layer (got {} dims, {} activations)",
                dims.len(),
                acts.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(String::from("zero-width layer")));
        }
        let layers: Vec<Layer> = dims
            .windows(2)
            .zip(acts.iter())
            .map(|(w, &act)| Layer::new(w[0], w[1], act))
            .collect();
        let param_count = layers.iter().map(|l| l.w.len() + l.b.len()).sum();
        Ok(DenseNet {
            layers,
            param_count,
        })
    }

    /// Glorot-uniform weight init (biases zero); deterministic in `rng`.
    pub fn init_glorot(&mut self, rng: &mut impl RngCore) {
        for layer in self.layers.iter_mut() {
            layer.glorot_init(rng);
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim
    }

    /// Mutable parameter slices in a fixed order (`w0, b0, w1, b1, ...`),
    /// aligned with [`NetGrads::slices`]; used by the optimizer.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in self.layers.iter_mut() {
            let Layer { w, b, .. } = layer;
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in self.layers.iter() {
            out.push(layer.w.as_slice());
            out.push(layer.b.as_slice());
        }
        out
    }

    /// Batched forward pass; returns outputs and the activation cache
    /// consumed by [`DenseNet::backward_batch`].
    pub fn forward_batch(&self, x: &Mat) -> Result<(Mat, BatchCache)> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.in_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward_batch(acts.last().expect("nonempty"));
            acts.push(next);
        }
        let out = acts.last().expect("nonempty").clone();
        Ok((out, BatchCache { acts }))
    }

    /// Single-sample forward pass: `(output, cache)`.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, BatchCache)> {
        let x = Mat::from_rows(&[input]);
        let (out, cache) = self.forward_batch(&x)?;
        Ok((out.row(0).to_vec(), cache))
    }

    fn check_cache(&self, cache: &BatchCache) -> Result<()> {
        if cache.acts.len() != self.layers.len() + 1 {
            return Err(Error::Cache(format!(
                "cache has {} activation maps, network has {} layers",
                cache.acts.len(),
                self.layers.len()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if cache.acts[i].cols() != layer.in_dim || cache.acts[i + 1].cols() != layer.out_dim {
                return Err(Error::Cache(format!(
                    "cached activations do not match layer {i} ({}x{})",
                    layer.in_dim, layer.out_dim
                )));
            }
        }
        Ok(())
    }

    /// Batched backward pass: gradients for every parameter plus the
    /// gradient w.r.t. the input batch.
    pub fn backward_batch(&self, cache: &BatchCache, dout: &Mat) -> Result<(NetGrads, Mat)> {
        self.check_cache(cache)?;
        if dout.cols() != self.out_dim() || dout.rows() != cache.acts[0].rows() {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, expected {}x{}",
                dout.rows(),
                dout.cols(),
                cache.acts[0].rows(),
                self.out_dim()
            )));
        }
        let mut grads = NetGrads::zeros_like(self);
        let mut dcur = dout.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (dw, db, dx) = layer.backward_batch(&cache.acts[i], &cache.acts[i + 1], &dcur);
            grads.dw[i] = dw;
            grads.db[i] = db;
            dcur = dx;
        }
        Ok((grads, dcur))
    }

    /// Single-sample backward pass: `(param grads, d loss / d input)`.
    pub fn backward(&self, cache: &BatchCache, out_grad: &[f64]) -> Result<(NetGrads, Vec<f64>)> {
        let dout = Mat::from_rows(&[out_grad]);
        let (grads, dx) = self.backward_batch(cache, &dout)?;
        Ok((grads, dx.row(0).to_vec()))
    }
}
