//! The five subcommands. Each takes the resolved [`crate::RunConfig`],
//! folds in its own flags, validates before touching the filesystem, and
//! returns a human-readable summary for the binary to print.

pub mod ablate;
pub mod eval;
pub mod report;
pub mod scene;
pub mod train;

pub use ablate::{cmd_ablate, AblateArgs};
pub use eval::{cmd_eval, EvalArgs};
pub use report::{cmd_report, ReportArgs};
pub use scene::{cmd_scene, dataset_from_rays, SceneArgs};
pub use train::{cmd_train, TrainArgs};
