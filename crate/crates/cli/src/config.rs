//! Run configuration: one TOML document drives every subcommand. Missing
//! keys fall back to the desk-scale defaults, unknown keys are rejected,
//! and the fully resolved document is written next to each run's outputs so
//! every artifact is self-describing.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use beamdiff_core::baselines::{AngleSource, BaselineTrainConfig};
use beamdiff_core::diffusion::{DenoiserVariant, ScheduleSpec, TrainConfig};
use beamdiff_core::sampler::{SamplerConfig, SamplerKind};
use beamdiff_core::scene::SceneConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::atomic_write;

pub const CONFIG_VERSION: u32 = 1;

/// Environment override for the output directory.
pub const ENV_OUT: &str = "BEAMDIFF_OUT";
/// Environment override for the worker count.
pub const ENV_JOBS: &str = "BEAMDIFF_JOBS";

/// Everything a run needs. Resolution order for the overridable knobs is
/// config file, then environment (`BEAMDIFF_OUT`, `BEAMDIFF_JOBS`), then
/// command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub out_dir: PathBuf,
    /// Worker threads; 0 = all logical cores, 1 = canonical serial baseline.
    pub jobs: usize,
    /// Seed for obstacle placement (and recorded as the dataset identity).
    pub scene_seed: u64,
    pub scene: SceneConfig,
    pub split: SplitSection,
    pub schedule: ScheduleSpec,
    pub train: TrainSection,
    pub samplers: Vec<SamplerSection>,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Train fraction of the user-level split.
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { ratio: 0.9, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Conditioning widths to train, each a prefix of the 7-entry vector.
    pub dims: Vec<usize>,
    /// Denoiser architectures to train (`mlp_small`, `mlp_large`, `unet`).
    pub variants: Vec<String>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub baseline_epochs: usize,
    pub baseline_batch_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let b = BaselineTrainConfig::default();
        TrainSection {
            dims: vec![3, 5, 7],
            variants: vec!["mlp_small".into(), "mlp_large".into(), "unet".into()],
            epochs: 20,
            batch_size: t.batch_size,
            lr: t.lr,
            weight_decay: t.weight_decay,
            seed: 0,
            baseline_epochs: b.epochs,
            baseline_batch_size: b.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    /// `ddpm` (full ladder) or `ddim` (subsampled ladder).
    pub kind: String,
    /// Ladder length; used by `ddim` only.
    pub steps: usize,
    /// Stochasticity knob for `ddim` (0 = deterministic).
    pub eta: f64,
    /// Priors averaged per user.
    pub n_samples: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            kind: "ddpm".into(),
            steps: 50,
            eta: 0.0,
            n_samples: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Seed for per-user sampling streams and the random-prior baseline.
    pub seed: u64,
    /// Timing repetitions when latency measurement is requested.
    pub latency_reps: usize,
    /// Which strongest-path azimuth the angle heuristic reads.
    pub angle_source: AngleSource,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            seed: 0,
            latency_reps: 5,
            angle_source: AngleSource::default(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            out_dir: PathBuf::from("runs/default"),
            jobs: 1,
            scene_seed: 7,
            scene: SceneConfig::default(),
            split: SplitSection::default(),
            schedule: ScheduleSpec::default(),
            train: TrainSection::default(),
            samplers: vec![
                SamplerSection::default(),
                SamplerSection {
                    kind: "ddim".into(),
                    ..SamplerSection::default()
                },
            ],
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    /// Loads the file (or the built-in defaults when `path` is `None`) and
    /// applies the environment overrides.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                // An unreadable config is a configuration problem, not a
                // data problem; both failures here exit with code 2.
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.apply_env()?;
        Ok(cfg)
    }

    fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = env::var(ENV_OUT) {
            self.out_dir = PathBuf::from(v);
        }
        if let Ok(v) = env::var(ENV_JOBS) {
            self.jobs = v.parse().map_err(|_| {
                CliError::Config(format!("{ENV_JOBS} must be a worker count, got {v:?}"))
            })?;
        }
        Ok(())
    }

    /// Command-line flags win over both the file and the environment.
    pub fn apply_flags(&mut self, out: Option<&Path>, jobs: Option<usize>) {
        if let Some(o) = out {
            self.out_dir = o.to_path_buf();
        }
        if let Some(j) = jobs {
            self.jobs = j;
        }
    }

    /// Rejects anything that would fail mid-run; called by every command
    /// before it touches the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} (this build reads {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.train.dims.is_empty() {
            return Err(CliError::Config("train.dims must not be empty".into()));
        }
        for &d in &self.train.dims {
            if !(1..=7).contains(&d) {
                return Err(CliError::Config(format!(
                    "conditioning width {d} outside 1..=7"
                )));
            }
        }
        if self.train.dims.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config(
                "train.dims must be strictly increasing".into(),
            ));
        }
        self.variants()?;
        if self.train.epochs == 0 || self.train.baseline_epochs == 0 {
            return Err(CliError::Config("epochs must be positive".into()));
        }
        if self.train.batch_size == 0 || self.train.baseline_batch_size == 0 {
            return Err(CliError::Config("batch sizes must be positive".into()));
        }
        if !(self.train.lr.is_finite() && self.train.lr > 0.0) {
            return Err(CliError::Config(format!(
                "learning rate {} must be positive and finite",
                self.train.lr
            )));
        }
        if !(self.train.weight_decay.is_finite() && self.train.weight_decay >= 0.0) {
            return Err(CliError::Config(format!(
                "weight decay {} must be nonnegative and finite",
                self.train.weight_decay
            )));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(CliError::Config(format!(
                "split ratio {} outside (0, 1)",
                self.split.ratio
            )));
        }
        if self.samplers.is_empty() {
            return Err(CliError::Config("at least one sampler required".into()));
        }
        self.sampler_configs()?;
        if self.eval.latency_reps == 0 {
            return Err(CliError::Config("eval.latency_reps must be positive".into()));
        }
        Ok(())
    }

    /// Parsed architecture list, in config order.
    pub fn variants(&self) -> Result<Vec<DenoiserVariant>> {
        self.train
            .variants
            .iter()
            .map(|s| DenoiserVariant::parse(s).map_err(CliError::from))
            .collect()
    }

    /// `(label, config)` per sampler section; the label names the CSV rows
    /// (`ddpm-500`, `ddim-50`, ...).
    pub fn sampler_configs(&self) -> Result<Vec<(String, SamplerConfig)>> {
        self.samplers
            .iter()
            .map(|s| {
                let kind = SamplerKind::parse(&s.kind)?;
                if s.n_samples == 0 {
                    return Err(CliError::Config("sampler n_samples must be positive".into()));
                }
                let steps = match kind {
                    SamplerKind::Ddpm => self.schedule.t_steps,
                    SamplerKind::Ddim => {
                        if s.steps == 0 || s.steps > self.schedule.t_steps {
                            return Err(CliError::Config(format!(
                                "ddim steps {} outside 1..={}",
                                s.steps, self.schedule.t_steps
                            )));
                        }
                        s.steps
                    }
                };
                if !(s.eta.is_finite() && s.eta >= 0.0) {
                    return Err(CliError::Config(format!(
                        "sampler eta {} must be nonnegative and finite",
                        s.eta
                    )));
                }
                let cfg = SamplerConfig {
                    kind,
                    ddim_steps: s.steps,
                    eta: s.eta,
                    n_samples: s.n_samples,
                };
                Ok((format!("{}-{steps}", kind.name()), cfg))
            })
            .collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            seed: self.train.seed,
        }
    }

    pub fn baseline_config(&self) -> BaselineTrainConfig {
        BaselineTrainConfig {
            epochs: self.train.baseline_epochs,
            batch_size: self.train.baseline_batch_size,
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            seed: self.train.seed,
        }
    }

    /// Stable 64-bit FNV-1a over the canonical serialization, with the
    /// placement-only knobs (`out_dir`, `jobs`) neutralized so the same
    /// experiment hashes identically from any directory or worker count.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out_dir = PathBuf::new();
        canon.jobs = 0;
        let text = toml::to_string(&canon).expect("resolved config always serializes");
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }

    /// Writes the fully resolved document next to the run's outputs.
    pub fn write_resolved(&self, paths: &RunPaths) -> Result<()> {
        let text = toml::to_string_pretty(self).expect("resolved config always serializes");
        atomic_write(&paths.resolved_config(), text.as_bytes())
    }
}

/// FNV-1a: tiny, dependency-free, and stable across platforms. Collision
/// resistance is irrelevant for a provenance tag; stability is the point.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Canonical layout of one run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    root: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path) -> RunPaths {
        RunPaths {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolved_config(&self) -> PathBuf {
        self.root.join("config.resolved.toml")
    }

    pub fn rays_csv(&self) -> PathBuf {
        self.root.join("rays.csv")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.json")
    }

    pub fn denoiser_checkpoint(&self, variant: DenoiserVariant, d: usize) -> PathBuf {
        self.root
            .join("checkpoints")
            .join(format!("{}_d{d}.json", variant.name()))
    }

    pub fn baseline_checkpoint(&self, name: &str, d: usize) -> PathBuf {
        self.root
            .join("checkpoints")
            .join(format!("{name}_d{d}.json"))
    }

    pub fn loss_trace(&self, model: &str, d: usize) -> PathBuf {
        self.root.join("traces").join(format!("{model}_d{d}.loss.csv"))
    }

    pub fn metrics_csv(&self) -> PathBuf {
        self.root.join("reports").join("metrics.csv")
    }

    pub fn metrics_json(&self) -> PathBuf {
        self.root.join("reports").join("metrics.json")
    }

    pub fn ablation_csv(&self) -> PathBuf {
        self.root.join("reports").join("ablation.csv")
    }
}
