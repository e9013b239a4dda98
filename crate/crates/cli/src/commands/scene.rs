//! `beamdiff scene`: synthesize (or import) ray data and build the dataset.
//!
//! Two entry paths produce the same artifacts. The synthetic path generates
//! the scene from the seed, traces every grid user, and builds records
//! in-memory; the import path reads a previously exported ray CSV and
//! rebuilds records from those paths. Either way the run directory ends up
//! with `rays.csv`, `dataset.json`, and the resolved config.

use std::path::PathBuf;

use beamdiff_core::codebook::{beam_gains, beam_prior, dft_codebook, optimal_beam, Codebook};
use beamdiff_core::dataset::{build_dataset, split_dataset, BeamDataset, Split, UeRecord};
use beamdiff_core::exec::ParallelMap;
use beamdiff_core::features::build_features;
use beamdiff_core::scene::{generate_scene, synthesize_channel, trace_paths, SceneConfig};

use crate::config::{RunConfig, RunPaths};
use crate::error::{CliError, Result};
use crate::formats::{read_ray_csv, save_dataset, write_ray_csv, UeRays};
use crate::pool::Exec;

/// Flags for `beamdiff scene`; each one narrows or replaces part of the
/// configured geometry and is folded into the resolved config it writes.
#[derive(Debug, Clone, Default)]
pub struct SceneArgs {
    /// Override for the configured scene seed.
    pub seed: Option<u64>,
    /// Drop all reflector walls (line-of-sight paths only).
    pub no_reflectors: bool,
    /// Drop all blockers (nothing is shadowed).
    pub no_blockers: bool,
    /// Build the dataset from this ray CSV instead of tracing.
    pub import: Option<PathBuf>,
}

pub fn cmd_scene(mut cfg: RunConfig, args: &SceneArgs, exec: &Exec) -> Result<String> {
    if let Some(seed) = args.seed {
        cfg.scene_seed = seed;
    }
    if args.no_reflectors {
        cfg.scene.n_reflectors = 0;
    }
    if args.no_blockers {
        cfg.scene.n_blockers = 0;
    }
    cfg.validate()?;

    let (rays, mut ds) = match &args.import {
        // Imported rays are the source of truth; records are rebuilt from
        // them with the same projection the tracer-backed path uses.
        Some(csv) => {
            let rays = read_ray_csv(csv)?;
            let ds = dataset_from_rays(&cfg.scene, cfg.scene_seed, &rays)?;
            (rays, ds)
        }
        // Synthetic runs build records in-memory; the exported rays are a
        // byproduct of the same deterministic tracer, so importing them
        // later reproduces this dataset.
        None => {
            let scene = generate_scene(&cfg.scene, cfg.scene_seed)?;
            let cb = dft_codebook(cfg.scene.n_t, cfg.scene.n_beam)?;
            let ds = build_dataset(&scene, &cb, exec)?;
            let ues = scene.ue_positions().to_vec();
            let traced = exec.map_indexed(ues.len(), &|i| trace_paths(&scene, ues[i]));
            let mut rays = Vec::with_capacity(ues.len());
            for (i, paths) in traced.into_iter().enumerate() {
                rays.push(UeRays {
                    ue_id: i,
                    pos: ues[i],
                    paths: paths?,
                });
            }
            (rays, ds)
        }
    };
    split_dataset(&mut ds, cfg.split.ratio, cfg.split.seed)?;

    let paths = RunPaths::new(&cfg.out_dir);
    write_ray_csv(&paths.rays_csv(), &rays)?;
    save_dataset(&paths.dataset(), &ds, &cfg.hash())?;
    cfg.write_resolved(&paths)?;

    let los = ds.los_count();
    let zero = ds.zero_power_count();
    let train = ds.train_records().count();
    Ok(format!(
        "scene {}: {} users ({} LOS / {} NLOS, {} zero-power), {} beams, split {}/{}\n\
         wrote {}",
        cfg.scene_seed,
        ds.len(),
        los,
        ds.len() - los,
        zero,
        ds.n_beam,
        train,
        ds.len() - train,
        paths.root().display(),
    ))
}

/// Rebuilds user records from externally supplied rays: synthesize the
/// channel, project onto the codebook, normalize, extract features. This is
/// the adapter point for real ray-tracer exports; sampling stream ids are
/// derived from `ue_id`, so ids must stay below 2^32.
pub fn dataset_from_rays(
    scene: &SceneConfig,
    scene_seed: u64,
    rays: &[UeRays],
) -> Result<BeamDataset> {
    let cb = dft_codebook(scene.n_t, scene.n_beam)?;
    let mut records = Vec::with_capacity(rays.len());
    for ue in rays {
        if ue.ue_id >= (1 << 32) {
            return Err(CliError::Data(format!(
                "user id {} does not fit the 32-bit stream index",
                ue.ue_id
            )));
        }
        records.push(record_from_rays(scene, &cb, ue)?);
    }
    Ok(BeamDataset {
        n_t: scene.n_t,
        n_beam: scene.n_beam,
        spacing_wl: scene.spacing_wl,
        scene_seed,
        records,
    })
}

fn record_from_rays(scene: &SceneConfig, cb: &Codebook, ue: &UeRays) -> Result<UeRecord> {
    let h = synthesize_channel(&ue.paths, scene.n_t, scene.spacing_wl)?;
    let gains = beam_gains(&h, cb)?;
    let (prior, zero_power) = beam_prior(&gains)?;
    let best_beam = optimal_beam(&gains)?;
    let features = build_features(ue.pos, scene.bs, &ue.paths, 7)?;
    Ok(UeRecord {
        ue_id: ue.ue_id,
        pos: ue.pos,
        los: ue.paths.iter().any(|p| p.is_los),
        n_paths: ue.paths.len(),
        features,
        gains,
        prior,
        best_beam,
        zero_power,
        split: Split::Unsplit,
    })
}
