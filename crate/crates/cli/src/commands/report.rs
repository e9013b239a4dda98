//! `beamdiff report`: render metric CSVs as aligned text tables. Reads the
//! run's own `metrics.csv` by default but accepts any files written by
//! `eval` or `ablate`.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::config::{RunConfig, RunPaths};
use crate::error::Result;
use crate::formats::{read_report_csv, ReportRow};

/// Flags for `beamdiff report`.
#[derive(Debug, Clone, Default)]
pub struct ReportArgs {
    /// Metric CSVs to render; empty means the run's `metrics.csv`.
    pub paths: Vec<PathBuf>,
}

pub fn cmd_report(cfg: &RunConfig, args: &ReportArgs) -> Result<String> {
    let files = if args.paths.is_empty() {
        vec![RunPaths::new(&cfg.out_dir).metrics_csv()]
    } else {
        args.paths.clone()
    };

    let mut out = String::new();
    for (i, file) in files.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let rows = read_report_csv(file)?;
        writeln!(out, "{}", file.display()).expect("writing to a string cannot fail");
        out.push_str(&render_table(&rows));
    }
    Ok(out.trim_end().to_string())
}

/// Groups per-`k` rows back into one line per model and prints the sweep
/// sizes people actually compare.
fn render_table(rows: &[ReportRow]) -> String {
    let mut groups: Vec<((String, String, Option<usize>), Vec<&ReportRow>)> = Vec::new();
    for row in rows {
        let key = (row.model.clone(), row.sampler.clone(), row.d);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(row),
            None => groups.push((key, vec![row])),
        }
    }

    let mut out = String::new();
    writeln!(
        out,
        "{:<10} {:<9} {:<3} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9} {:>12}",
        "model", "sampler", "d", "hit@1", "hit@3", "hit@5", "snr@1", "snr@3", "eligible", "ms/user"
    )
    .expect("writing to a string cannot fail");
    for ((model, sampler, d), g) in &groups {
        let at = |k: usize| g.iter().find(|r| r.k == k);
        let hit = |k: usize| at(k).map_or_else(|| "-".into(), |r| format!("{:.3}", r.hit_at_k));
        let snr = |k: usize| {
            at(k)
                .and_then(|r| r.snr_ratio_at_k)
                .map_or_else(|| "-".into(), |v| format!("{v:.3}"))
        };
        let first = g.first().expect("groups are never empty");
        let lat = first
            .latency_ms_per_user
            .map_or_else(|| "-".into(), |v| format!("{v:.3}"));
        writeln!(
            out,
            "{:<10} {:<9} {:<3} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9} {:>12}",
            model,
            sampler,
            d.map_or_else(|| "-".to_string(), |d| format!("{d}")),
            hit(1),
            hit(3),
            hit(5),
            snr(1),
            snr(3),
            first.n_eligible,
            lat,
        )
        .expect("writing to a string cannot fail");
    }
    out
}
