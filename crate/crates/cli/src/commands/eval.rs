//! `beamdiff eval`: score every model on the validation split.
//!
//! Denoisers are sampled with one dedicated noise stream per user, keyed by
//! user id, so the resulting priors do not depend on batching or worker
//! count. Metric passes run parallel per user; latency, when requested, is
//! re-measured afterwards on a single thread so the timing column reflects
//! per-user cost rather than the machine's core count. The checkpoint-free
//! references (angle heuristic, uniform, random, oracle) are always scored,
//! even when no checkpoints exist yet.

use std::fmt::Write as _;
use std::time::Instant;

use beamdiff_core::baselines::{aoa_prior, random_prior, uniform_prior, AngleSource};
use beamdiff_core::codebook::dft_codebook;
use beamdiff_core::dataset::{BeamDataset, UeRecord};
use beamdiff_core::diffusion::{linear_schedule, Denoiser, DenoiserVariant, NoiseSchedule};
use beamdiff_core::exec::{ParallelMap, Serial, CHUNK};
use beamdiff_core::features::FeatureNormalizer;
use beamdiff_core::mat::Mat;
use beamdiff_core::metrics::{evaluate, MetricsReport};
use beamdiff_core::rng::{self, Ns};
use beamdiff_core::sampler::{sample_priors_batch, SamplerConfig, SamplerKind};

use crate::config::{RunConfig, RunPaths};
use crate::error::{CliError, Result};
use crate::formats::{
    load_checkpoint, report_rows, save_report_json, write_report_csv, CheckpointModel,
    ModelReport, ReportSummary, REPORT_VERSION,
};
use crate::pool::Exec;

/// Flags for `beamdiff eval`.
#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    /// Re-measure each model's per-user latency (slow for long ladders).
    pub latency: bool,
    /// Override for the configured evaluation seed.
    pub seed: Option<u64>,
    /// Override for the angle heuristic's azimuth source (`aod` or `aoa`).
    pub angle_source: Option<String>,
}

pub fn cmd_eval(mut cfg: RunConfig, args: &EvalArgs, exec: &Exec) -> Result<String> {
    if let Some(seed) = args.seed {
        cfg.eval.seed = seed;
    }
    if let Some(src) = &args.angle_source {
        cfg.eval.angle_source = parse_angle_source(src)?;
    }
    cfg.validate()?;

    let paths = RunPaths::new(&cfg.out_dir);
    let ds = super::train::load_run_dataset(&paths)?;
    let vals: Vec<&UeRecord> = ds.val_records().collect();

    let (denoiser_evals, skipped) =
        eval_denoisers(&cfg, &paths, &vals, args.latency, false, exec)?;
    let mut models: Vec<ModelReport> = denoiser_evals
        .into_iter()
        .map(|e| ModelReport {
            model: e.variant.name().to_string(),
            sampler: e.sampler_label,
            d: Some(e.d),
            report: e.report,
        })
        .collect();

    let (baseline_models, baseline_skipped) =
        eval_supervised_baselines(&cfg, &paths, &vals, args.latency, exec)?;
    models.extend(baseline_models);
    models.extend(eval_references(&cfg, &ds, &vals, args.latency)?);

    let mut rows = Vec::new();
    for m in &models {
        rows.extend(report_rows(&m.model, &m.sampler, m.d, &m.report));
    }
    write_report_csv(&paths.metrics_csv(), &rows)?;
    save_report_json(
        &paths.metrics_json(),
        &ReportSummary {
            version: REPORT_VERSION,
            config_hash: cfg.hash(),
            models: models.clone(),
        },
    )?;
    cfg.write_resolved(&paths)?;

    let mut lines = String::new();
    for note in skipped.iter().chain(baseline_skipped.iter()) {
        writeln!(lines, "skipped {note}").expect("writing to a string cannot fail");
    }
    for m in &models {
        writeln!(lines, "{}", summary_line(m)).expect("writing to a string cannot fail");
    }
    write!(
        lines,
        "evaluated {} users; wrote {}",
        vals.len(),
        paths.metrics_csv().display()
    )
    .expect("writing to a string cannot fail");
    Ok(lines)
}

fn summary_line(m: &ModelReport) -> String {
    let d = m.d.map_or_else(|| "-".to_string(), |d| format!("d{d}"));
    let k3 = (m.report.n_beam.min(3)) - 1;
    format!(
        "{:<10} {:<9} {:<3} hit@1 {:.3}  hit@3 {:.3}  snr@3 {:.3}",
        m.model, m.sampler, d, m.report.hit[0], m.report.hit[k3], m.report.snr[k3]
    )
}

pub(crate) fn parse_angle_source(s: &str) -> Result<AngleSource> {
    match s {
        "aod" => Ok(AngleSource::Aod),
        "aoa" => Ok(AngleSource::Aoa),
        other => Err(CliError::Config(format!(
            "unknown angle source {other:?} (expected aod or aoa)"
        ))),
    }
}

/// One evaluated `(architecture, width, sampler)` cell.
pub(crate) struct DenoiserEval {
    pub variant: DenoiserVariant,
    pub d: usize,
    pub sampler_label: String,
    pub train_seed: u64,
    pub report: MetricsReport,
}

/// Scores every configured denoiser cell under every configured sampler.
/// `strict` decides what a missing checkpoint means: the ablation sweep
/// fails loudly, the plain eval records a skip note and moves on.
pub(crate) fn eval_denoisers(
    cfg: &RunConfig,
    paths: &RunPaths,
    vals: &[&UeRecord],
    latency: bool,
    strict: bool,
    exec: &Exec,
) -> Result<(Vec<DenoiserEval>, Vec<String>)> {
    let mut evals = Vec::new();
    let mut skipped = Vec::new();
    for variant in cfg.variants()? {
        for &d in &cfg.train.dims {
            let file = paths.denoiser_checkpoint(variant, d);
            if !file.exists() {
                if strict {
                    return Err(CliError::Data(format!(
                        "ablation cell {}xd{d}: missing checkpoint {} (run `beamdiff train` first)",
                        variant.name(),
                        file.display()
                    )));
                }
                skipped.push(format!("{} d{d}: no checkpoint at {}", variant.name(), file.display()));
                continue;
            }
            let ckpt = load_checkpoint(&file)?;
            let CheckpointModel::Denoiser(den) = &ckpt.model else {
                return Err(CliError::Data(format!(
                    "{}: expected a denoiser checkpoint",
                    file.display()
                )));
            };
            let spec = ckpt.schedule.ok_or_else(|| {
                CliError::Data(format!("{}: denoiser checkpoint lacks a schedule", file.display()))
            })?;
            // Sample under the schedule the model was trained with, not
            // whatever the current config says.
            let sched = linear_schedule(spec)?;
            let xs = standardize(vals, d, &ckpt.normalizer)?;
            let ue_ids: Vec<usize> = vals.iter().map(|r| r.ue_id).collect();

            for (_, scfg) in cfg.sampler_configs()? {
                let label = sampler_label(&scfg, &sched);
                let priors = sampled_priors(den, &sched, &xs, &ue_ids, &scfg, cfg.eval.seed, exec)?;
                let mut report = eval_with_priors(vals, &priors)?;
                if latency {
                    report.latency_s = Some(time_per_user(cfg.eval.latency_reps, vals.len(), || {
                        sampled_priors(den, &sched, &xs, &ue_ids, &scfg, cfg.eval.seed, &Serial)
                            .map(|_| ())
                    })?);
                }
                evals.push(DenoiserEval {
                    variant,
                    d,
                    sampler_label: label,
                    train_seed: ckpt.meta.seed,
                    report,
                });
            }
        }
    }
    Ok((evals, skipped))
}

/// Row label naming the effective ladder: the full schedule length for the
/// ancestral sampler, the configured sub-ladder for the accelerated one.
fn sampler_label(scfg: &SamplerConfig, sched: &NoiseSchedule) -> String {
    let steps = match scfg.kind {
        SamplerKind::Ddpm => sched.t_steps(),
        SamplerKind::Ddim => scfg.ddim_steps,
    };
    format!("{}-{steps}", scfg.kind.name())
}

/// Standardized conditioning matrix for a split, one row per user.
fn standardize(vals: &[&UeRecord], d: usize, norm: &FeatureNormalizer) -> Result<Mat> {
    let mut rows = Vec::with_capacity(vals.len());
    for rec in vals {
        rows.push(norm.apply(rec.features_d(d))?);
    }
    Ok(Mat::from_rows(
        &rows.iter().map(Vec::as_slice).collect::<Vec<_>>(),
    ))
}

/// Samples one prior per row of `xs`. Work is split into fixed chunks for
/// the executor, but every user draws from a stream keyed by its id alone,
/// so the output is bitwise independent of chunking and worker count.
pub(crate) fn sampled_priors(
    den: &Denoiser,
    sched: &NoiseSchedule,
    xs: &Mat,
    ue_ids: &[usize],
    scfg: &SamplerConfig,
    seed: u64,
    exec: &impl ParallelMap,
) -> Result<Vec<Vec<f64>>> {
    let n = xs.rows();
    let n_chunks = n.div_ceil(CHUNK);
    let parts = exec.map_indexed(n_chunks, &|ci| -> Result<Vec<Vec<f64>>> {
        let lo = ci * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let xc = Mat::from_rows(&(lo..hi).map(|r| xs.row(r)).collect::<Vec<_>>());
        let mut rngs: Vec<_> = ue_ids[lo..hi]
            .iter()
            .map(|&id| rng::substream(seed, Ns::Sample, id as u64))
            .collect();
        let (p, _) = sample_priors_batch(den, sched, &xc, scfg, &mut rngs)?;
        Ok((0..p.rows()).map(|r| p.row(r).to_vec()).collect())
    });
    let mut out = Vec::with_capacity(n);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Scores a split against priors computed up front (one per record, in
/// split order).
fn eval_with_priors(vals: &[&UeRecord], priors: &[Vec<f64>]) -> Result<MetricsReport> {
    let mut next = 0usize;
    let rep = evaluate(vals.iter().copied(), |_| {
        let p = priors[next].clone();
        next += 1;
        Ok(p)
    })?;
    Ok(rep)
}

/// Wall-clock seconds per user: `reps` passes over the split, single
/// thread, full prior-generation loop and nothing else.
fn time_per_user(reps: usize, n_users: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let t0 = Instant::now();
    for _ in 0..reps {
        f()?;
    }
    Ok(t0.elapsed().as_secs_f64() / (reps * n_users) as f64)
}

/// Scores the trained classifier and regressor checkpoints.
fn eval_supervised_baselines(
    cfg: &RunConfig,
    paths: &RunPaths,
    vals: &[&UeRecord],
    latency: bool,
    exec: &Exec,
) -> Result<(Vec<ModelReport>, Vec<String>)> {
    let mut models = Vec::new();
    let mut skipped = Vec::new();
    for name in ["classifier", "regressor"] {
        for &d in &cfg.train.dims {
            let file = paths.baseline_checkpoint(name, d);
            if !file.exists() {
                skipped.push(format!("{name} d{d}: no checkpoint at {}", file.display()));
                continue;
            }
            let ckpt = load_checkpoint(&file)?;
            let CheckpointModel::Baseline(model) = &ckpt.model else {
                return Err(CliError::Data(format!(
                    "{}: expected a baseline checkpoint",
                    file.display()
                )));
            };
            let priors = {
                let parts = exec.map_indexed(vals.len(), &|i| -> Result<Vec<f64>> {
                    model.predict_prior(&ckpt.normalizer.apply(vals[i].features_d(d))?)
                        .map_err(CliError::from)
                });
                let mut out = Vec::with_capacity(vals.len());
                for p in parts {
                    out.push(p?);
                }
                out
            };
            let mut report = eval_with_priors(vals, &priors)?;
            if latency {
                report.latency_s = Some(time_per_user(cfg.eval.latency_reps, vals.len(), || {
                    for rec in vals {
                        model.predict_prior(&ckpt.normalizer.apply(rec.features_d(d))?)?;
                    }
                    Ok(())
                })?);
            }
            models.push(ModelReport {
                model: name.to_string(),
                sampler: "-".to_string(),
                d: Some(d),
                report,
            });
        }
    }
    Ok((models, skipped))
}

/// Scores the checkpoint-free references: angle heuristic, uniform floor,
/// random simplex draws, and the ground-truth prior itself (the oracle that
/// pins the top of every metric).
fn eval_references(
    cfg: &RunConfig,
    ds: &BeamDataset,
    vals: &[&UeRecord],
    latency: bool,
) -> Result<Vec<ModelReport>> {
    let cb = dft_codebook(ds.n_t, ds.n_beam)?;
    let spacing_wl = ds.spacing_wl;
    let source = cfg.eval.angle_source;
    let seed = cfg.eval.seed;
    let mut models = Vec::new();

    let mut aoa = evaluate(vals.iter().copied(), |rec| {
        Ok(aoa_prior(rec, &cb, spacing_wl, source))
    })?;
    let mut uniform = evaluate(vals.iter().copied(), |rec| Ok(uniform_prior(rec.gains.len())))?;
    let mut random = evaluate(vals.iter().copied(), |rec| {
        let mut rng = rng::substream(seed, Ns::RandomPrior, rec.ue_id as u64);
        Ok(random_prior(&mut rng, rec.gains.len()))
    })?;
    let mut oracle = evaluate(vals.iter().copied(), |rec| Ok(rec.prior.as_slice().to_vec()))?;

    if latency {
        let reps = cfg.eval.latency_reps;
        aoa.latency_s = Some(time_per_user(reps, vals.len(), || {
            for rec in vals {
                aoa_prior(rec, &cb, spacing_wl, source);
            }
            Ok(())
        })?);
        uniform.latency_s = Some(time_per_user(reps, vals.len(), || {
            for rec in vals {
                uniform_prior(rec.gains.len());
            }
            Ok(())
        })?);
        random.latency_s = Some(time_per_user(reps, vals.len(), || {
            for rec in vals {
                let mut rng = rng::substream(seed, Ns::RandomPrior, rec.ue_id as u64);
                random_prior(&mut rng, rec.gains.len());
            }
            Ok(())
        })?);
        oracle.latency_s = Some(time_per_user(reps, vals.len(), || {
            for rec in vals {
                let _ = rec.prior.as_slice();
            }
            Ok(())
        })?);
    }

    for (name, report) in [
        ("aoa", aoa),
        ("uniform", uniform),
        ("random", random),
        ("oracle", oracle),
    ] {
        models.push(ModelReport {
            model: name.to_string(),
            sampler: "-".to_string(),
            d: None,
            report,
        });
    }
    Ok(models)
}
