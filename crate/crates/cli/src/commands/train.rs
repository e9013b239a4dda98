//! `beamdiff train`: fit every configured denoiser and the supervised
//! baselines against the run's dataset.
//!
//! Each `(architecture, conditioning width)` cell gets its own weight-init
//! stream, so adding or removing cells never perturbs the others. Every
//! checkpoint carries the feature normalizer and (for denoisers) the noise
//! schedule it was trained under; evaluation reads both from the checkpoint
//! rather than trusting the config it happens to run with.

use std::fmt::Write as _;

use beamdiff_core::baselines::{baseline_examples, train_baseline, BaselineKind};
use beamdiff_core::dataset::BeamDataset;
use beamdiff_core::diffusion::{
    linear_schedule, train_denoiser, training_set, Denoiser, DenoiserVariant,
};
use beamdiff_core::features::FeatureNormalizer;
use beamdiff_core::rng::{self, Ns};

use crate::config::{RunConfig, RunPaths};
use crate::error::{CliError, Result};
use crate::formats::{
    load_dataset, save_checkpoint, write_loss_trace, Checkpoint, CheckpointModel, TrainMeta,
    CHECKPOINT_VERSION,
};
use crate::pool::Exec;

/// Flags for `beamdiff train`; list flags replace the configured lists.
#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    /// Architectures to train instead of the configured set.
    pub variants: Vec<String>,
    /// Conditioning widths to train instead of the configured set.
    pub dims: Vec<usize>,
    /// Epoch override for denoisers and baselines alike.
    pub epochs: Option<usize>,
    /// Train denoisers only.
    pub skip_baselines: bool,
}

pub fn cmd_train(mut cfg: RunConfig, args: &TrainArgs, exec: &Exec) -> Result<String> {
    if !args.variants.is_empty() {
        cfg.train.variants = args.variants.clone();
    }
    if !args.dims.is_empty() {
        cfg.train.dims = args.dims.clone();
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
        cfg.train.baseline_epochs = epochs;
    }
    cfg.validate()?;

    let paths = RunPaths::new(&cfg.out_dir);
    let ds = load_run_dataset(&paths)?;
    let norm = fit_normalizer(&ds)?;
    let sched = linear_schedule(cfg.schedule)?;
    let hash = cfg.hash();
    let mut lines = String::new();

    for variant in cfg.variants()? {
        for &d in &cfg.train.dims {
            let examples = training_set(ds.train_records(), d, &norm)?;
            let mut den = Denoiser::new(
                variant,
                d,
                ds.n_beam,
                &mut rng::substream(cfg.train.seed, Ns::Init, init_stream(variant, d)),
            )?;
            let trace = train_denoiser(&mut den, &sched, &examples, &cfg.train_config(), exec)?;
            let final_loss = *trace.last().expect("positive epochs leave a trace");
            let params = den.param_count();
            write_loss_trace(&paths.loss_trace(variant.name(), d), &trace)?;
            save_checkpoint(
                &paths.denoiser_checkpoint(variant, d),
                &Checkpoint {
                    version: CHECKPOINT_VERSION,
                    n_beam: ds.n_beam,
                    schedule: Some(cfg.schedule),
                    normalizer: norm.clone(),
                    model: CheckpointModel::Denoiser(den),
                    meta: TrainMeta {
                        seed: cfg.train.seed,
                        epochs: cfg.train.epochs,
                        d,
                        config_hash: hash.clone(),
                        final_loss,
                    },
                },
            )?;
            writeln!(
                lines,
                "{} d{d}: {params} params, final loss {final_loss:.5} ({} epochs)",
                variant.name(),
                cfg.train.epochs,
            )
            .expect("writing to a string cannot fail");
        }
    }

    if !args.skip_baselines {
        for kind in [BaselineKind::Classifier, BaselineKind::Regressor] {
            for &d in &cfg.train.dims {
                let examples = baseline_examples(ds.train_records(), d, &norm)?;
                let (model, trace) = train_baseline(
                    kind,
                    &examples,
                    d,
                    ds.n_beam,
                    &cfg.baseline_config(),
                    exec,
                )?;
                let final_loss = *trace.last().expect("positive epochs leave a trace");
                write_loss_trace(&paths.loss_trace(kind.name(), d), &trace)?;
                save_checkpoint(
                    &paths.baseline_checkpoint(kind.name(), d),
                    &Checkpoint {
                        version: CHECKPOINT_VERSION,
                        n_beam: ds.n_beam,
                        schedule: None,
                        normalizer: norm.clone(),
                        model: CheckpointModel::Baseline(model),
                        meta: TrainMeta {
                            seed: cfg.train.seed,
                            epochs: cfg.train.baseline_epochs,
                            d,
                            config_hash: hash.clone(),
                            final_loss,
                        },
                    },
                )?;
                writeln!(
                    lines,
                    "{} d{d}: final loss {final_loss:.5} ({} epochs)",
                    kind.name(),
                    cfg.train.baseline_epochs,
                )
                .expect("writing to a string cannot fail");
            }
        }
    }

    cfg.write_resolved(&paths)?;
    write!(
        lines,
        "wrote checkpoints and loss traces under {}",
        paths.root().display()
    )
    .expect("writing to a string cannot fail");
    Ok(lines)
}

/// Loads the run's dataset, pointing the user at `beamdiff scene` when it is
/// not there yet.
pub fn load_run_dataset(paths: &RunPaths) -> Result<BeamDataset> {
    let file = paths.dataset();
    if !file.exists() {
        return Err(CliError::Data(format!(
            "{}: not found (run `beamdiff scene` first)",
            file.display()
        )));
    }
    let (ds, _) = load_dataset(&file)?;
    Ok(ds)
}

/// Train-split feature statistics at full width; every narrower conditioning
/// prefix standardizes through the same fit.
pub fn fit_normalizer(ds: &BeamDataset) -> Result<FeatureNormalizer> {
    Ok(FeatureNormalizer::fit(
        ds.train_records().map(|r| r.features.as_slice()),
    )?)
}

/// Weight-init stream id for one `(architecture, width)` cell. Widths stay
/// below 16, so cells never collide.
fn init_stream(variant: DenoiserVariant, d: usize) -> u64 {
    let vi = match variant {
        DenoiserVariant::MlpSmall => 0,
        DenoiserVariant::MlpLarge => 1,
        DenoiserVariant::Unet => 2,
    };
    vi * 16 + d as u64
}
