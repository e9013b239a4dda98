//! Std companion to `beamdiff-core`: run configuration, on-disk artifact
//! formats, a thread-pool executor, and the subcommand implementations
//! behind the `beamdiff` binary.
//!
//! Everything here is plumbing — the numerics live in the core crate. The
//! contract this crate adds is reproducibility of artifacts: a run is fully
//! determined by `(config, seeds)`, outputs are written atomically, and the
//! parallel executor reproduces the serial byte stream for any worker count.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod pool;

pub use config::{RunConfig, RunPaths};
pub use error::{CliError, Result};
pub use pool::Exec;
