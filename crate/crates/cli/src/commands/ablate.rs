//! `beamdiff ablate`: the conditioning sweep. Every configured
//! `(architecture, width, sampler)` cell is scored — a missing checkpoint
//! aborts the sweep instead of silently thinning the grid — and each row
//! carries its provenance: the seed the checkpoint was trained with and the
//! hash of the resolved config that produced the row.

use std::fmt::Write as _;

use beamdiff_core::dataset::UeRecord;

use crate::config::{RunConfig, RunPaths};
use crate::error::Result;
use crate::formats::{report_rows, write_ablation_csv, AblationRow};
use crate::pool::Exec;

use super::eval::eval_denoisers;
use super::train::load_run_dataset;

/// Flags for `beamdiff ablate`.
#[derive(Debug, Clone, Default)]
pub struct AblateArgs {
    /// Re-measure each cell's per-user latency.
    pub latency: bool,
}

pub fn cmd_ablate(cfg: RunConfig, args: &AblateArgs, exec: &Exec) -> Result<String> {
    cfg.validate()?;

    let paths = RunPaths::new(&cfg.out_dir);
    let ds = load_run_dataset(&paths)?;
    let vals: Vec<&UeRecord> = ds.val_records().collect();

    let (evals, _) = eval_denoisers(&cfg, &paths, &vals, args.latency, true, exec)?;
    let hash = cfg.hash();
    let mut rows = Vec::new();
    for e in &evals {
        for r in report_rows(e.variant.name(), &e.sampler_label, Some(e.d), &e.report) {
            rows.push(AblationRow {
                model: r.model,
                sampler: r.sampler,
                d: r.d,
                k: r.k,
                hit_at_k: r.hit_at_k,
                snr_ratio_at_k: r.snr_ratio_at_k,
                n_eligible: r.n_eligible,
                latency_ms_per_user: r.latency_ms_per_user,
                seed: e.train_seed,
                config_hash: hash.clone(),
            });
        }
    }
    write_ablation_csv(&paths.ablation_csv(), &rows)?;
    cfg.write_resolved(&paths)?;

    // One line per (architecture, sampler): hit@1 across widths, the view
    // the sweep exists to produce.
    let mut lines = String::new();
    for e in &evals {
        writeln!(
            lines,
            "{:<10} {:<9} d{}: hit@1 {:.3}  hit@3 {:.3}",
            e.variant.name(),
            e.sampler_label,
            e.d,
            e.report.hit[0],
            e.report.hit[(e.report.n_beam.min(3)) - 1],
        )
        .expect("writing to a string cannot fail");
    }
    write!(
        lines,
        "{} cells over {} users; wrote {}",
        evals.len(),
        vals.len(),
        paths.ablation_csv().display()
    )
    .expect("writing to a string cannot fail");
    Ok(lines)
}
