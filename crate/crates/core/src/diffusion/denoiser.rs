//! Conditional epsilon-prediction networks.
//!
//! All denoisers consume `(y_t, x, t)`: the noisy beam vector, standardized
//! side information, and the integer timestep (as a sinusoidal embedding fed
//! through a dense projection). Two families are provided:
//!
//! - [`MlpDenoiser`]: embeddings for `t` and `x` concatenated with `y_t`
//!   into a plain ReLU trunk (small and large widths).
//! - [`UnetDenoiser`]: an encoder/bottleneck/decoder ladder over the beam
//!   vector with additive skip connections and the conditioning vector
//!   injected additively at every level.
//!
//! The [`Denoise`] trait is the sampler-facing surface; tests substitute
//! closed-form oracles for trained networks through it.

use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::{sinusoidal_embedding, Activation, BatchCache, DenseNet, NetGrads};

/// Width of the raw sinusoidal timestep embedding.
pub const T_EMBED_DIM: usize = 64;

/// Model capacity/topology selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserVariant {
    MlpSmall,
    MlpLarge,
    Unet,
}

impl DenoiserVariant {
    pub fn name(&self) -> &'static str {
        match self {
            DenoiserVariant::MlpSmall => "mlp_small",
            DenoiserVariant::MlpLarge => "mlp_large",
            DenoiserVariant::Unet => "unet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mlp_small" => Ok(DenoiserVariant::MlpSmall),
            "mlp_large" => Ok(DenoiserVariant::MlpLarge),
            "unet" => Ok(DenoiserVariant::Unet),
            other => Err(Error::Config(format!("unknown denoiser variant {other:?}"))),
        }
    }
}

/// Anything that predicts the injected noise from `(y_t, x, t)`.
pub trait Denoise {
    /// Width of the vectors being denoised; samplers draw their starting
    /// noise at this width.
    fn n_beam(&self) -> usize;

    fn predict_noise(&self, y_t: &[f64], x_std: &[f64], t: usize) -> Result<Vec<f64>>;

    /// Batched prediction; rows pair `y[r]`, `x[r]`, `ts[r]`. The default
    /// loops the scalar path; implementations may batch for speed but must
    /// produce identical values row by row.
    fn predict_noise_batch(&self, y: &Mat, x: &Mat, ts: &[usize]) -> Result<Mat> {
        let mut out = Mat::zeros(y.rows(), y.cols());
        for r in 0..y.rows() {
            let row = self.predict_noise(y.row(r), x.row(r), ts[r])?;
            out.row_mut(r).copy_from_slice(&row);
        }
        Ok(out)
    }
}

/// Builds the matrix of sinusoidal embeddings for a batch of timesteps,
/// reusing the previous row when consecutive timesteps repeat (the common
/// case during lockstep sampling).
fn embed_rows(ts: &[usize]) -> Result<Mat> {
    let mut m = Mat::zeros(ts.len(), T_EMBED_DIM);
    for r in 0..ts.len() {
        if r > 0 && ts[r] == ts[r - 1] {
            let prev = m.row(r - 1).to_vec();
            m.row_mut(r).copy_from_slice(&prev);
        } else {
            let e = sinusoidal_embedding(ts[r], T_EMBED_DIM)?;
            m.row_mut(r).copy_from_slice(&e);
        }
    }
    Ok(m)
}

/// MLP denoiser: ReLU embeddings for timestep and side information feed a
/// ReLU trunk together with the noisy beam vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDenoiser {
    variant: DenoiserVariant,
    d: usize,
    n_beam: usize,
    embed: usize,
    t_net: DenseNet,
    x_net: DenseNet,
    trunk: DenseNet,
}

/// Forward cache for [`MlpDenoiser`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    t: BatchCache,
    x: BatchCache,
    trunk: BatchCache,
}

impl MlpDenoiser {
    fn new(variant: DenoiserVariant, d: usize, n_beam: usize) -> Result<Self> {
        let (embed, hidden, depth) = match variant {
            DenoiserVariant::MlpSmall => (128usize, 256usize, 3usize),
            DenoiserVariant::MlpLarge => (256, 512, 4),
            DenoiserVariant::Unet => {
                return Err(Error::Config(
                    "unet variant is not an MLP".into(),
                ))
            }
        };
        let t_net = DenseNet::new(&[T_EMBED_DIM, embed], &[Activation::Relu])?;
        let x_net = DenseNet::new(&[d, embed], &[Activation::Relu])?;
        let mut dims = Vec::with_capacity(depth + 2);
        dims.push(n_beam + 2 * embed);
        for _ in 0..depth {
            dims.push(hidden);
        }
        dims.push(n_beam);
        let mut acts = alloc::vec![Activation::Relu; depth];
        acts.push(Activation::Identity);
        let trunk = DenseNet::new(&dims, &acts)?;
        Ok(MlpDenoiser {
            variant,
            d,
            n_beam,
            embed,
            t_net,
            x_net,
            trunk,
        })
    }

    fn forward_batch(&self, y: &Mat, x: &Mat, ts: &[usize]) -> Result<(Mat, MlpCache)> {
        let (temb, t_cache) = self.t_net.forward_batch(&embed_rows(ts)?)?;
        let (xemb, x_cache) = self.x_net.forward_batch(x)?;
        let trunk_in = Mat::hcat(&[y, &temb, &xemb]);
        let (out, trunk_cache) = self.trunk.forward_batch(&trunk_in)?;
        Ok((
            out,
            MlpCache {
                t: t_cache,
                x: x_cache,
                trunk: trunk_cache,
            },
        ))
    }

    fn backward_batch(&self, cache: &MlpCache, dout: &Mat) -> Result<Vec<NetGrads>> {
        let (g_trunk, d_in) = self.trunk.backward_batch(&cache.trunk, dout)?;
        let d_temb = d_in.col_slice(self.n_beam, self.embed);
        let d_xemb = d_in.col_slice(self.n_beam + self.embed, self.embed);
        let (g_t, _) = self.t_net.backward_batch(&cache.t, &d_temb)?;
        let (g_x, _) = self.x_net.backward_batch(&cache.x, &d_xemb)?;
        Ok(alloc::vec![g_t, g_x, g_trunk])
    }

    fn nets(&self) -> Vec<&DenseNet> {
        alloc::vec![&self.t_net, &self.x_net, &self.trunk]
    }

    fn nets_mut(&mut self) -> Vec<&mut DenseNet> {
        alloc::vec![&mut self.t_net, &mut self.x_net, &mut self.trunk]
    }
}

/// Encoder/decoder denoiser over the beam vector with additive skips and
/// per-level conditioning injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnetDenoiser {
    d: usize,
    n_beam: usize,
    /// Per-branch conditioning embedding width (the conditioning vector is
    /// the concatenation of both branches).
    embed: usize,
    t_net: DenseNet,
    x_net: DenseNet,
    enc1: DenseNet,
    inj1: DenseNet,
    enc2: DenseNet,
    inj2: DenseNet,
    bott: DenseNet,
    inj3: DenseNet,
    dec2: DenseNet,
    inj4: DenseNet,
    dec1: DenseNet,
    inj5: DenseNet,
    out: DenseNet,
}

/// Forward cache for [`UnetDenoiser`]: per-net caches plus the post-ReLU
/// level activations needed for masks and skip joins.
#[derive(Debug, Clone)]
pub struct UnetCache {
    t: BatchCache,
    x: BatchCache,
    enc1: BatchCache,
    inj1: BatchCache,
    a1: Mat,
    enc2: BatchCache,
    inj2: BatchCache,
    a2: Mat,
    bott: BatchCache,
    inj3: BatchCache,
    ab: Mat,
    dec2: BatchCache,
    inj4: BatchCache,
    ad2: Mat,
    dec1: BatchCache,
    inj5: BatchCache,
    ad1: Mat,
    out: BatchCache,
}

const UNET_W1: usize = 256;
const UNET_W2: usize = 512;
const UNET_W3: usize = 768;
const UNET_EMBED: usize = 128;

fn relu_inplace(m: &mut Mat) {
    for v in m.data_mut().iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `dout` wherever the recorded post-ReLU activation is inactive.
fn relu_mask(dout: &Mat, act: &Mat) -> Mat {
    let mut dz = dout.clone();
    for (g, &a) in dz.data_mut().iter_mut().zip(act.data().iter()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
    dz
}

impl UnetDenoiser {
    fn new(d: usize, n_beam: usize) -> Result<Self> {
        let lin = |i: usize, o: usize| DenseNet::new(&[i, o], &[Activation::Identity]);
        let cond = 2 * UNET_EMBED;
        Ok(UnetDenoiser {
            d,
            n_beam,
            embed: UNET_EMBED,
            t_net: DenseNet::new(&[T_EMBED_DIM, UNET_EMBED], &[Activation::Relu])?,
            x_net: DenseNet::new(&[d, UNET_EMBED], &[Activation::Relu])?,
            enc1: lin(n_beam, UNET_W1)?,
            inj1: lin(cond, UNET_W1)?,
            enc2: lin(UNET_W1, UNET_W2)?,
            inj2: lin(cond, UNET_W2)?,
            bott: lin(UNET_W2, UNET_W3)?,
            inj3: lin(cond, UNET_W3)?,
            dec2: lin(UNET_W3, UNET_W2)?,
            inj4: lin(cond, UNET_W2)?,
            dec1: lin(UNET_W2, UNET_W1)?,
            inj5: lin(cond, UNET_W1)?,
            out: lin(UNET_W1, n_beam)?,
        })
    }

    fn forward_batch(&self, y: &Mat, x: &Mat, ts: &[usize]) -> Result<(Mat, UnetCache)> {
        let (temb, t_cache) = self.t_net.forward_batch(&embed_rows(ts)?)?;
        let (xemb, x_cache) = self.x_net.forward_batch(x)?;
        let c = Mat::hcat(&[&temb, &xemb]);

        // Each level computes relu(linear(prev) + inject(cond) [+ skip]).
        let (e1, enc1_cache) = self.enc1.forward_batch(y)?;
        let (i1, inj1_cache) = self.inj1.forward_batch(&c)?;
        let mut a1 = e1;
        a1.add_assign(&i1);
        relu_inplace(&mut a1);

        let (e2, enc2_cache) = self.enc2.forward_batch(&a1)?;
        let (i2, inj2_cache) = self.inj2.forward_batch(&c)?;
        let mut a2 = e2;
        a2.add_assign(&i2);
        relu_inplace(&mut a2);

        let (bl, bott_cache) = self.bott.forward_batch(&a2)?;
        let (i3, inj3_cache) = self.inj3.forward_batch(&c)?;
        let mut ab = bl;
        ab.add_assign(&i3);
        relu_inplace(&mut ab);

        let (d2, dec2_cache) = self.dec2.forward_batch(&ab)?;
        let (i4, inj4_cache) = self.inj4.forward_batch(&c)?;
        let mut ad2 = d2;
        ad2.add_assign(&i4);
        ad2.add_assign(&a2);
        relu_inplace(&mut ad2);

        let (d1, dec1_cache) = self.dec1.forward_batch(&ad2)?;
        let (i5, inj5_cache) = self.inj5.forward_batch(&c)?;
        let mut ad1 = d1;
        ad1.add_assign(&i5);
        ad1.add_assign(&a1);
        relu_inplace(&mut ad1);

        let (out, out_cache) = self.out.forward_batch(&ad1)?;
        Ok((
            out,
            UnetCache {
                t: t_cache,
                x: x_cache,
                enc1: enc1_cache,
                inj1: inj1_cache,
                a1,
                enc2: enc2_cache,
                inj2: inj2_cache,
                a2,
                bott: bott_cache,
                inj3: inj3_cache,
                ab,
                dec2: dec2_cache,
                inj4: inj4_cache,
                ad2,
                dec1: dec1_cache,
                inj5: inj5_cache,
                ad1,
                out: out_cache,
            },
        ))
    }

    fn backward_batch(&self, cache: &UnetCache, dout: &Mat) -> Result<Vec<NetGrads>> {
        let (g_out, d_ad1) = self.out.backward_batch(&cache.out, dout)?;

        // dec1 level: gradient flows into the linear, the injection, and the
        // additive skip from a1.
        let dz1 = relu_mask(&d_ad1, &cache.ad1);
        let (g_dec1, d_ad2_main) = self.dec1.backward_batch(&cache.dec1, &dz1)?;
        let (g_inj5, d_c5) = self.inj5.backward_batch(&cache.inj5, &dz1)?;

        let dz2 = relu_mask(&d_ad2_main, &cache.ad2);
        let (g_dec2, d_ab) = self.dec2.backward_batch(&cache.dec2, &dz2)?;
        let (g_inj4, d_c4) = self.inj4.backward_batch(&cache.inj4, &dz2)?;

        let dzb = relu_mask(&d_ab, &cache.ab);
        let (g_bott, d_a2_main) = self.bott.backward_batch(&cache.bott, &dzb)?;
        let (g_inj3, d_c3) = self.inj3.backward_batch(&cache.inj3, &dzb)?;

        // a2 feeds both the bottleneck and the dec2 skip join.
        let mut d_a2 = d_a2_main;
        d_a2.add_assign(&dz2);
        let dze2 = relu_mask(&d_a2, &cache.a2);
        let (g_enc2, d_a1_main) = self.enc2.backward_batch(&cache.enc2, &dze2)?;
        let (g_inj2, d_c2) = self.inj2.backward_batch(&cache.inj2, &dze2)?;

        // a1 feeds enc2 and the dec1 skip join.
        let mut d_a1 = d_a1_main;
        d_a1.add_assign(&dz1);
        let dze1 = relu_mask(&d_a1, &cache.a1);
        let (g_enc1, _d_y) = self.enc1.backward_batch(&cache.enc1, &dze1)?;
        let (g_inj1, d_c1) = self.inj1.backward_batch(&cache.inj1, &dze1)?;

        // Conditioning vector: sum over all injection branches, then split
        // into the two embedding branches.
        let mut d_c = d_c5;
        d_c.add_assign(&d_c4);
        d_c.add_assign(&d_c3);
        d_c.add_assign(&d_c2);
        d_c.add_assign(&d_c1);
        let d_temb = d_c.col_slice(0, self.embed);
        let d_xemb = d_c.col_slice(self.embed, self.embed);
        let (g_t, _) = self.t_net.backward_batch(&cache.t, &d_temb)?;
        let (g_x, _) = self.x_net.backward_batch(&cache.x, &d_xemb)?;

        Ok(alloc::vec![
            g_t, g_x, g_enc1, g_inj1, g_enc2, g_inj2, g_bott, g_inj3, g_dec2, g_inj4, g_dec1,
            g_inj5, g_out,
        ])
    }

    fn nets(&self) -> Vec<&DenseNet> {
        alloc::vec![
            &self.t_net,
            &self.x_net,
            &self.enc1,
            &self.inj1,
            &self.enc2,
            &self.inj2,
            &self.bott,
            &self.inj3,
            &self.dec2,
            &self.inj4,
            &self.dec1,
            &self.inj5,
            &self.out,
        ]
    }

    fn nets_mut(&mut self) -> Vec<&mut DenseNet> {
        alloc::vec![
            &mut self.t_net,
            &mut self.x_net,
            &mut self.enc1,
            &mut self.inj1,
            &mut self.enc2,
            &mut self.inj2,
            &mut self.bott,
            &mut self.inj3,
            &mut self.dec2,
            &mut self.inj4,
            &mut self.dec1,
            &mut self.inj5,
            &mut self.out,
        ]
    }
}

/// A conditional denoiser of any supported architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Denoiser {
    Mlp(MlpDenoiser),
    Unet(UnetDenoiser),
}

/// Forward cache for [`Denoiser::forward_batch`].
#[derive(Debug, Clone)]
pub enum DenoiserCache {
    Mlp(MlpCache),
    Unet(UnetCache),
}

/// Parameter gradients for a [`Denoiser`], one [`NetGrads`] per subnet in
/// the same order as [`Denoiser::param_slices_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserGrads {
    nets: Vec<NetGrads>,
}

impl DenoiserGrads {
    pub fn zeros_like(den: &Denoiser) -> Self {
        DenoiserGrads {
            nets: den.nets().iter().map(|n| NetGrads::zeros_like(n)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &DenoiserGrads) {
        assert_eq!(self.nets.len(), other.nets.len());
        for (a, b) in self.nets.iter_mut().zip(other.nets.iter()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.nets.iter_mut() {
            g.scale(s);
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.nets.iter().flat_map(|g| g.slices()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.nets.iter().map(|g| g.max_abs()).fold(0.0, f64::max)
    }
}

impl Denoiser {
    /// Builds a denoiser with Glorot-initialized weights; the layer init
    /// order is fixed, so equal seeds give equal networks.
    pub fn new(
        variant: DenoiserVariant,
        d: usize,
        n_beam: usize,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        if n_beam == 0 || d == 0 {
            return Err(Error::Config(format!(
                "denoiser needs nonzero dims, got d={d} n_beam={n_beam}"
            )));
        }
        let mut den = match variant {
            DenoiserVariant::Unet => Denoiser::Unet(UnetDenoiser::new(d, n_beam)?),
            v => Denoiser::Mlp(MlpDenoiser::new(v, d, n_beam)?),
        };
        for net in den.nets_mut() {
            net.init_glorot(rng);
        }
        Ok(den)
    }

    pub fn variant(&self) -> DenoiserVariant {
        match self {
            Denoiser::Mlp(m) => m.variant,
            Denoiser::Unet(_) => DenoiserVariant::Unet,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Denoiser::Mlp(m) => m.d,
            Denoiser::Unet(u) => u.d,
        }
    }

    pub fn n_beam(&self) -> usize {
        match self {
            Denoiser::Mlp(m) => m.n_beam,
            Denoiser::Unet(u) => u.n_beam,
        }
    }

    pub fn param_count(&self) -> usize {
        self.nets().iter().map(|n| n.param_count()).sum()
    }

    fn nets(&self) -> Vec<&DenseNet> {
        match self {
            Denoiser::Mlp(m) => m.nets(),
            Denoiser::Unet(u) => u.nets(),
        }
    }

    fn nets_mut(&mut self) -> Vec<&mut DenseNet> {
        match self {
            Denoiser::Mlp(m) => m.nets_mut(),
            Denoiser::Unet(u) => u.nets_mut(),
        }
    }

    /// Mutable parameter slices across all subnets, aligned with
    /// [`DenoiserGrads::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.nets_mut()
            .into_iter()
            .flat_map(|n| n.param_slices_mut())
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.nets().into_iter().flat_map(|n| n.param_slices()).collect()
    }

    fn check_inputs(&self, y: &Mat, x: &Mat, ts: &[usize]) -> Result<()> {
        if y.cols() != self.n_beam() || x.cols() != self.d() {
            return Err(Error::Shape(format!(
                "denoiser expects y width {} and x width {}, got {} and {}",
                self.n_beam(),
                self.d(),
                y.cols(),
                x.cols()
            )));
        }
        if y.rows() != x.rows() || y.rows() != ts.len() {
            return Err(Error::Shape(format!(
                "row mismatch: y {}, x {}, ts {}",
                y.rows(),
                x.rows(),
                ts.len()
            )));
        }
        Ok(())
    }

    /// Batched forward pass returning predicted noise and a backward cache.
    pub fn forward_batch(&self, y: &Mat, x: &Mat, ts: &[usize]) -> Result<(Mat, DenoiserCache)> {
        self.check_inputs(y, x, ts)?;
        match self {
            Denoiser::Mlp(m) => {
                let (out, c) = m.forward_batch(y, x, ts)?;
                Ok((out, DenoiserCache::Mlp(c)))
            }
            Denoiser::Unet(u) => {
                let (out, c) = u.forward_batch(y, x, ts)?;
                Ok((out, DenoiserCache::Unet(c)))
            }
        }
    }

    /// Batched backward pass: parameter gradients for the cached batch.
    pub fn backward_batch(&self, cache: &DenoiserCache, dout: &Mat) -> Result<DenoiserGrads> {
        let nets = match (self, cache) {
            (Denoiser::Mlp(m), DenoiserCache::Mlp(c)) => m.backward_batch(c, dout)?,
            (Denoiser::Unet(u), DenoiserCache::Unet(c)) => u.backward_batch(c, dout)?,
            _ => {
                return Err(Error::Cache(
                    "cache comes from a different denoiser family".into(),
                ))
            }
        };
        Ok(DenoiserGrads { nets })
    }
}

impl Denoise for Denoiser {
    fn n_beam(&self) -> usize {
        Denoiser::n_beam(self)
    }

    fn predict_noise(&self, y_t: &[f64], x_std: &[f64], t: usize) -> Result<Vec<f64>> {
        let y = Mat::from_rows(&[y_t]);
        let x = Mat::from_rows(&[x_std]);
        let (out, _) = self.forward_batch(&y, &x, &[t])?;
        Ok(out.row(0).to_vec())
    }

    fn predict_noise_batch(&self, y: &Mat, x: &Mat, ts: &[usize]) -> Result<Mat> {
        let (out, _) = self.forward_batch(y, x, ts)?;
        Ok(out)
    }
}
