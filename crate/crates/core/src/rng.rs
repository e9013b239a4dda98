//! Seeded randomness.
//!
//! Every stochastic step in the pipeline draws from a `ChaCha8Rng` stream
//! derived from a user-visible seed plus a `(namespace, id)` pair. Keyed
//! substreams make parallel work reproducible: each unit (UE, training run,
//! sampler call) owns an independent stream, so results cannot depend on
//! worker interleaving. Only `next_u64` output is consumed, and the mappings
//! to floats/integers below are hand-rolled, so values are stable across
//! library versions.

// Binds only in pure no_std builds; whenever std is in the crate graph its
// inherent f64 methods win, leaving this import "unused".
#[allow(unused_imports)]
use crate::math::FloatExt;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream namespaces; combined with a 32-bit id into a ChaCha stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ns {
    Scene = 1,
    Split = 2,
    Init = 3,
    Train = 4,
    Sample = 5,
    RandomPrior = 6,
    Test = 7,
}

/// Root RNG for a seed (stream 0).
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream for `(seed, namespace, id)`.
///
/// Streams with distinct `(ns, id)` never overlap; `id` must fit in 32 bits
/// (callers index UEs, epochs, or runs, all far below that).
pub fn substream(seed: u64, ns: Ns, id: u64) -> ChaCha8Rng {
    debug_assert!(id < (1 << 32), "substream id out of range: {id}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((ns as u64) << 32) | id);
    rng
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn u01(rng: &mut impl RngCore) -> f64 {
    // Top 53 bits of a u64, scaled by 2^-53.
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Standard normal draw via Box-Muller.
#[inline]
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    // u1 in (0, 1] so ln(u1) is finite; u2 in [0, 1).
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
    (-2.0 * u1.ln()).sqrt() * (crate::math::TAU * u2).cos()
}

/// Fills `out` with standard normal draws.
pub fn fill_standard_normal(rng: &mut impl RngCore, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = standard_normal(rng);
    }
}

/// Unbiased uniform index in `[0, n)` (Lemire's multiply-shift with rejection).
pub fn rand_index(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0, "rand_index needs a nonempty range");
    let n = n as u64;
    let mut x = rng.next_u64();
    let mut m = (x as u128) * (n as u128);
    let mut lo = m as u64;
    if lo < n {
        let threshold = n.wrapping_neg() % n;
        while lo < threshold {
            x = rng.next_u64();
            m = (x as u128) * (n as u128);
            lo = m as u64;
        }
    }
    (m >> 64) as usize
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut impl RngCore, slice: &mut [T]) {
    for i in (1..slice.len()).rev() {
        let j = rand_index(rng, i + 1);
        slice.swap(i, j);
    }
}
