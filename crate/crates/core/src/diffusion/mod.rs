//! Conditional denoising diffusion over beam priors: the noise schedule, the
//! epsilon-prediction denoiser architectures, and the training loop.

mod denoiser;
mod schedule;
mod train;

pub use denoiser::{
    Denoise, Denoiser, DenoiserCache, DenoiserGrads, DenoiserVariant, MlpDenoiser, UnetDenoiser,
    T_EMBED_DIM,
};
pub use schedule::{
    forward_noise, linear_schedule, NoiseSchedule, ScheduleSpec, DEFAULT_BETA_END,
    DEFAULT_BETA_START, DEFAULT_T_STEPS,
};
pub use train::{train_denoiser, training_set, TrainConfig, TrainExample};
