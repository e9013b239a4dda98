//! Thread-pool executor behind `--jobs`. Work arrives as index maps and is
//! collected back in index order, so any worker count reproduces the serial
//! result stream bit for bit; `--jobs 1` bypasses the pool entirely and is
//! the canonical baseline.

use beamdiff_core::exec::{ParallelMap, Serial};
use rayon::prelude::*;

use crate::error::{CliError, Result};

pub enum Exec {
    Serial(Serial),
    Pool(rayon::ThreadPool),
}

impl Exec {
    /// `1` gives the serial baseline; `0` means all logical cores.
    pub fn with_jobs(jobs: usize) -> Result<Exec> {
        if jobs == 1 {
            return Ok(Exec::Serial(Serial));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs) // rayon reads 0 as "pick a default"
            .build()
            .map(Exec::Pool)
            .map_err(|e| CliError::Config(format!("cannot build a {jobs}-thread pool: {e}")))
    }

    pub fn jobs(&self) -> usize {
        match self {
            Exec::Serial(_) => 1,
            Exec::Pool(pool) => pool.current_num_threads(),
        }
    }
}

impl ParallelMap for Exec {
    fn map_indexed<T: Send>(&self, n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        match self {
            Exec::Serial(serial) => serial.map_indexed(n, f),
            Exec::Pool(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}
