//! Execution abstraction for embarrassingly parallel index maps.
//!
//! Core algorithms only need "apply `f` to every index, collect results in
//! index order". The serial implementation lives here; a thread-pool backed
//! implementation lives in the std companion crate. Because every call site
//! partitions work into fixed-size chunks and reduces in chunk order, outputs
//! are bit-identical for any worker count.

use alloc::vec::Vec;

/// Chunk width used by all deterministic parallel reductions in the crate.
pub const CHUNK: usize = 64;

/// Maps `f` over `0..n`, returning results in index order.
pub trait ParallelMap: Sync {
    fn map_indexed<T: Send>(&self, n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T>;
}

/// Single-threaded executor; always available in `no_std`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl ParallelMap for Serial {
    fn map_indexed<T: Send>(&self, n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        (0..n).map(f).collect()
    }
}
