//! Error type shared by every subcommand, mapped onto the binary's exit
//! codes: 0 success, 2 configuration error, 3 data error, 4 numeric or
//! training failure.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad run configuration: unreadable or invalid TOML, unknown model or
    /// sampler names, out-of-range values, config version mismatches.
    #[error("configuration error: {0}")]
    Config(String),
    /// Missing or malformed artifacts on disk (datasets, checkpoints,
    /// reports, ray files).
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] beamdiff_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Exit code for the binary. Core configuration and geometry errors are
    /// bad inputs (exit 2); everything else from the core crate is a numeric
    /// or training failure (exit 4).
    pub fn exit_code(&self) -> u8 {
        use beamdiff_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Core(E::Config(_) | E::Geometry(_)) => 2,
            CliError::Core(_) => 4,
        }
    }
}

/// Annotates an IO failure with the path it happened on.
pub fn io_err(path: &Path, err: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {err}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_documented_mapping() {
        use beamdiff_core::Error as E;
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Data("x".into()).exit_code(), 3);
        assert_eq!(CliError::Core(E::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(E::Geometry("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(E::Numeric("x".into())).exit_code(), 4);
        let diverged = E::Training {
            epoch: 1,
            step: 2,
            msg: "x".into(),
        };
        assert_eq!(CliError::Core(diverged).exit_code(), 4);
    }
}
