//! `beamdiff`: scene synthesis, denoiser training, and beam-prior
//! evaluation from one TOML config. Exit codes: 0 success, 2 configuration,
//! 3 data, 4 numeric/training failure.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use beamdiff_cli::commands::{
    cmd_ablate, cmd_eval, cmd_report, cmd_scene, cmd_train, AblateArgs, EvalArgs, ReportArgs,
    SceneArgs, TrainArgs,
};
use beamdiff_cli::{Exec, Result, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "beamdiff", version, about = "Beam-prior synthesis and evaluation")]
struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (overrides the config and BEAMDIFF_OUT).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads: 1 = canonical serial run, 0 = all logical cores
    /// (overrides the config and BEAMDIFF_JOBS). Identical results either
    /// way; only wall time changes.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize (or import) ray data and build the dataset.
    Scene {
        /// Scene seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Drop reflector walls: line-of-sight paths only.
        #[arg(long)]
        no_reflectors: bool,
        /// Drop blockers: nothing is shadowed.
        #[arg(long)]
        no_blockers: bool,
        /// Build from this ray CSV instead of tracing.
        #[arg(long, value_name = "CSV")]
        import: Option<PathBuf>,
    },
    /// Train denoisers and supervised baselines on the run's dataset.
    Train {
        /// Architecture subset (repeatable): mlp_small, mlp_large, unet.
        #[arg(long = "variant", value_name = "NAME")]
        variants: Vec<String>,
        /// Conditioning-width subset (repeatable).
        #[arg(long = "dim", value_name = "D")]
        dims: Vec<usize>,
        /// Epoch override for denoisers and baselines alike.
        #[arg(long)]
        epochs: Option<usize>,
        /// Train denoisers only.
        #[arg(long)]
        skip_baselines: bool,
    },
    /// Score every model on the validation split.
    Eval {
        /// Also measure per-user latency (separate single-threaded pass).
        #[arg(long)]
        latency: bool,
        /// Evaluation seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Angle-heuristic azimuth source: aod or aoa.
        #[arg(long, value_name = "SRC")]
        angle_source: Option<String>,
    },
    /// Score the full (architecture, width, sampler) grid with provenance;
    /// every cell's checkpoint must exist.
    Ablate {
        /// Also measure each cell's per-user latency.
        #[arg(long)]
        latency: bool,
    },
    /// Render metric CSVs as text tables.
    Report {
        /// CSV files (defaults to the run's metrics.csv).
        paths: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            // Tolerate a closed pipe (`beamdiff report | head`).
            let _ = writeln!(std::io::stdout(), "{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<String> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_flags(cli.out.as_deref(), cli.jobs);
    let exec = Exec::with_jobs(cfg.jobs)?;
    match cli.cmd {
        Cmd::Scene {
            seed,
            no_reflectors,
            no_blockers,
            import,
        } => cmd_scene(
            cfg,
            &SceneArgs {
                seed,
                no_reflectors,
                no_blockers,
                import,
            },
            &exec,
        ),
        Cmd::Train {
            variants,
            dims,
            epochs,
            skip_baselines,
        } => cmd_train(
            cfg,
            &TrainArgs {
                variants,
                dims,
                epochs,
                skip_baselines,
            },
            &exec,
        ),
        Cmd::Eval {
            latency,
            seed,
            angle_source,
        } => cmd_eval(
            cfg,
            &EvalArgs {
                latency,
                seed,
                angle_source,
            },
            &exec,
        ),
        Cmd::Ablate { latency } => cmd_ablate(cfg, &AblateArgs { latency }, &exec),
        Cmd::Report { paths } => cmd_report(&cfg, &ReportArgs { paths }),
    }
}
