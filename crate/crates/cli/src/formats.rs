//! On-disk artifacts: ray CSV, dataset container, model checkpoints, loss
//! traces, and metric reports.
//!
//! Two rules hold everywhere. Writes are temp-then-rename, so a crash never
//! leaves a half-written artifact under the final name. And every float is
//! encoded in shortest-round-trip decimal form, so save → load reproduces
//! each 64-bit value exactly and identical runs produce identical bytes.

use std::fs;
use std::path::Path;

use beamdiff_core::baselines::BaselineModel;
use beamdiff_core::dataset::BeamDataset;
use beamdiff_core::diffusion::{Denoiser, ScheduleSpec};
use beamdiff_core::features::FeatureNormalizer;
use beamdiff_core::metrics::MetricsReport;
use beamdiff_core::scene::{Path as PropPath, Vec3};
use beamdiff_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;

/// Writes `bytes` to a sibling temp file, then renames onto `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().ok_or_else(|| {
        CliError::Data(format!("{}: no parent directory", path.display()))
    })?;
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| CliError::Data(format!("{}: no file name", path.display())))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = dir.join(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Ray CSV: the adapter point for externally exported ray-tracer data.

/// Traced paths for one user, in the strongest-first order the tracer emits.
#[derive(Debug, Clone, PartialEq)]
pub struct UeRays {
    pub ue_id: usize,
    pub pos: Vec3,
    pub paths: Vec<PropPath>,
}

/// One `(user, path)` row. Users with no surviving paths keep a single
/// sentinel row with `path_index = -1` and zeroed path fields, so the import
/// side reconstructs them instead of dropping them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RayRow {
    ue_id: usize,
    x: f64,
    y: f64,
    z: f64,
    path_index: i64,
    gain_re: f64,
    gain_im: f64,
    aod_rad: f64,
    aoa_rad: f64,
    delay_s: f64,
    is_los: u8,
}

pub fn write_ray_csv(path: &Path, rays: &[UeRays]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for ue in rays {
        let base = RayRow {
            ue_id: ue.ue_id,
            x: ue.pos.x,
            y: ue.pos.y,
            z: ue.pos.z,
            path_index: -1,
            gain_re: 0.0,
            gain_im: 0.0,
            aod_rad: 0.0,
            aoa_rad: 0.0,
            delay_s: 0.0,
            is_los: 0,
        };
        if ue.paths.is_empty() {
            w.serialize(&base).map_err(|e| csv_write_err(path, e))?;
            continue;
        }
        for (i, p) in ue.paths.iter().enumerate() {
            w.serialize(RayRow {
                path_index: i as i64,
                gain_re: p.gain.re,
                gain_im: p.gain.im,
                aod_rad: p.aod_rad,
                aoa_rad: p.aoa_rad,
                delay_s: p.delay_s,
                is_los: u8::from(p.is_los),
                ..base
            })
            .map_err(|e| csv_write_err(path, e))?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    atomic_write(path, &bytes)
}

pub fn read_ray_csv(path: &Path) -> Result<Vec<UeRays>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let mut users: Vec<UeRays> = Vec::new();
    for row in rdr.deserialize::<RayRow>() {
        let row = row.map_err(|e| csv_read_err(path, e))?;
        let pos = Vec3::new(row.x, row.y, row.z);
        let current = match users.last_mut() {
            Some(u) if u.ue_id == row.ue_id => u,
            _ => {
                if users.iter().any(|u| u.ue_id == row.ue_id) {
                    return Err(CliError::Data(format!(
                        "{}: rows for user {} are not contiguous",
                        path.display(),
                        row.ue_id
                    )));
                }
                users.push(UeRays {
                    ue_id: row.ue_id,
                    pos,
                    paths: Vec::new(),
                });
                users.last_mut().expect("just pushed")
            }
        };
        if current.pos != pos {
            return Err(CliError::Data(format!(
                "{}: user {} listed at two positions",
                path.display(),
                row.ue_id
            )));
        }
        if row.path_index < 0 {
            if !current.paths.is_empty() {
                return Err(CliError::Data(format!(
                    "{}: user {} mixes a no-path sentinel with real paths",
                    path.display(),
                    row.ue_id
                )));
            }
            continue;
        }
        if row.path_index as usize != current.paths.len() {
            return Err(CliError::Data(format!(
                "{}: user {} has non-contiguous path_index {}",
                path.display(),
                row.ue_id,
                row.path_index
            )));
        }
        if row.is_los > 1 {
            return Err(CliError::Data(format!(
                "{}: user {} has is_los {} (expected 0 or 1)",
                path.display(),
                row.ue_id,
                row.is_los
            )));
        }
        current.paths.push(PropPath {
            gain: Complex64::new(row.gain_re, row.gain_im),
            delay_s: row.delay_s,
            aod_rad: row.aod_rad,
            aoa_rad: row.aoa_rad,
            is_los: row.is_los == 1,
        });
    }
    if users.is_empty() {
        return Err(CliError::Data(format!("{}: no ray rows", path.display())));
    }
    Ok(users)
}

fn csv_read_err(path: &Path, e: csv::Error) -> CliError {
    match e.position() {
        Some(pos) => CliError::Data(format!(
            "{}: line {}: {e}",
            path.display(),
            pos.line()
        )),
        None => CliError::Data(format!("{}: {e}", path.display())),
    }
}

fn csv_write_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Dataset container.

#[derive(Serialize)]
struct DatasetFileRef<'a> {
    version: u32,
    config_hash: &'a str,
    dataset: &'a BeamDataset,
}

// The version field is validated by the probe before this full parse runs.
#[derive(Deserialize)]
struct DatasetFile {
    config_hash: String,
    dataset: BeamDataset,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

pub fn save_dataset(path: &Path, ds: &BeamDataset, config_hash: &str) -> Result<()> {
    let file = DatasetFileRef {
        version: DATASET_VERSION,
        config_hash,
        dataset: ds,
    };
    let bytes = serde_json::to_vec(&file).expect("dataset always serializes");
    atomic_write(path, &bytes)
}

pub fn load_dataset(path: &Path) -> Result<(BeamDataset, String)> {
    let bytes = read_versioned(path, DATASET_VERSION, "dataset")?;
    let file: DatasetFile =
        serde_json::from_slice(&bytes).map_err(|e| json_err(path, e))?;
    Ok((file.dataset, file.config_hash))
}

/// Reads the file, checks the `version` field before committing to a full
/// parse, and reports parse failures with their line and column.
fn read_versioned(path: &Path, expected: u32, what: &str) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let probe: VersionProbe =
        serde_json::from_slice(&bytes).map_err(|e| json_err(path, e))?;
    if probe.version != expected {
        return Err(CliError::Data(format!(
            "{}: {what} format v{} (this build reads v{expected})",
            path.display(),
            probe.version
        )));
    }
    Ok(bytes)
}

fn json_err(path: &Path, e: serde_json::Error) -> CliError {
    CliError::Data(format!(
        "{}: line {} column {}: {e}",
        path.display(),
        e.line(),
        e.column()
    ))
}

// ---------------------------------------------------------------------------
// Checkpoints.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CheckpointModel {
    Denoiser(Denoiser),
    Baseline(BaselineModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    /// Conditioning width the model was trained with.
    pub d: usize,
    pub config_hash: String,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub n_beam: usize,
    /// Forward-process parameters the denoiser was trained under; `None`
    /// for baselines, which have no diffusion schedule.
    pub schedule: Option<ScheduleSpec>,
    /// Train-split feature statistics; inference inputs must be
    /// standardized with exactly these.
    pub normalizer: FeatureNormalizer,
    pub model: CheckpointModel,
    pub meta: TrainMeta,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = serde_json::to_vec(ckpt).expect("checkpoint always serializes");
    atomic_write(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_versioned(path, CHECKPOINT_VERSION, "checkpoint")?;
    serde_json::from_slice(&bytes).map_err(|e| json_err(path, e))
}

// ---------------------------------------------------------------------------
// Loss traces.

pub fn write_loss_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut text = String::from("epoch,mean_loss\n");
    for (i, loss) in trace.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, loss));
    }
    atomic_write(path, text.as_bytes())
}

// ---------------------------------------------------------------------------
// Metric reports: plot-ready CSV plus a JSON summary.

/// One `(model, sampler, d, k)` line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    /// `-` for models that involve no reverse-diffusion sampler.
    pub sampler: String,
    /// Conditioning width; empty for models that take no features.
    pub d: Option<usize>,
    pub k: usize,
    pub hit_at_k: f64,
    /// Empty when no validation user was eligible for the SNR ratio.
    pub snr_ratio_at_k: Option<f64>,
    pub n_eligible: usize,
    /// Only filled when latency measurement was requested; the single
    /// timing column, excluded from reproducibility comparisons.
    pub latency_ms_per_user: Option<f64>,
}

/// Ablation rows add provenance: the training seed behind the checkpoint
/// and the hash of the resolved config that produced the row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub sampler: String,
    pub d: Option<usize>,
    pub k: usize,
    pub hit_at_k: f64,
    pub snr_ratio_at_k: Option<f64>,
    pub n_eligible: usize,
    pub latency_ms_per_user: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}

/// Expands one report into its per-`k` CSV rows.
pub fn report_rows(
    model: &str,
    sampler: &str,
    d: Option<usize>,
    rep: &MetricsReport,
) -> Vec<ReportRow> {
    (1..=rep.n_beam)
        .map(|k| ReportRow {
            model: model.to_string(),
            sampler: sampler.to_string(),
            d,
            k,
            hit_at_k: rep.hit[k - 1],
            snr_ratio_at_k: (rep.eligible > 0).then(|| rep.snr[k - 1]),
            n_eligible: rep.eligible,
            latency_ms_per_user: rep.latency_s.map(|s| s * 1e3),
        })
        .collect()
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    write_csv(path, rows)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| csv_write_err(path, e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    atomic_write(path, &bytes)
}

/// Reads a metrics or ablation CSV; ablation provenance columns are
/// detected from the header and dropped.
pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let header = text.lines().next().unwrap_or_default();
    if header.split(',').any(|c| c == "config_hash") {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for row in rdr.deserialize::<AblationRow>() {
            let r = row.map_err(|e| csv_read_err(path, e))?;
            rows.push(ReportRow {
                model: r.model,
                sampler: r.sampler,
                d: r.d,
                k: r.k,
                hit_at_k: r.hit_at_k,
                snr_ratio_at_k: r.snr_ratio_at_k,
                n_eligible: r.n_eligible,
                latency_ms_per_user: r.latency_ms_per_user,
            });
        }
        return Ok(rows);
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for row in rdr.deserialize::<ReportRow>() {
        rows.push(row.map_err(|e| csv_read_err(path, e))?);
    }
    Ok(rows)
}

/// JSON summary mirroring the CSV, one entry per evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub sampler: String,
    pub d: Option<usize>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub version: u32,
    pub config_hash: String,
    pub models: Vec<ModelReport>,
}

pub fn save_report_json(path: &Path, summary: &ReportSummary) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(summary).expect("summary always serializes");
    atomic_write(path, &bytes)
}

pub fn load_report_json(path: &Path) -> Result<ReportSummary> {
    let bytes = read_versioned(path, REPORT_VERSION, "report")?;
    serde_json::from_slice(&bytes).map_err(|e| json_err(path, e))
}
