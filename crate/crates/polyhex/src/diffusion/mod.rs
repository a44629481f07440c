//! Denoising-diffusion machinery for point clouds: the noise schedule, the
//! closed-form forward corruption, training losses, and a deterministic
//! strided DDIM sampler.
//!
//! Everything here is pure given injected randomness. Clouds are `[M, 6]`
//! tensors (position xyz, normal xyz); the sampler treats normal channels as
//! ordinary coordinates and renormalizes them only at the very end.

pub mod ddim;
pub mod forward;
pub mod loss;
pub mod norm;
pub mod sample;
pub mod schedule;

pub use ddim::ddim_step;
pub use forward::{forward_sample, DiffusionSample};
pub use loss::{loss_hybrid, loss_l1, loss_l2};
pub use norm::Normalizer;
pub use sample::{sample, step_ladder, NoisePredictor, SampleRun};
pub use schedule::NoiseSchedule;

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("schedule: step count must be >= 1")]
    BadStepCount,
    #[error("schedule: need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")]
    BadBetaRange { beta_start: f64, beta_end: f64 },
    #[error("step {t} out of range [0, {max}]")]
    StepOutOfRange { t: usize, max: usize },
    #[error("ddim: t_prev {t_prev} must be strictly below t {t}")]
    NonMonotonicStep { t: usize, t_prev: usize },
    #[error("ddim: alpha_bar({t}) underflowed to zero, cannot invert")]
    ZeroAlphaBar { t: usize },
    #[error("sampler: stride must be >= 1")]
    BadStride,
    #[error("sampler: point count must be >= 1")]
    EmptyCloud,
    #[error("loss weight must lie in [0,1], got {0}")]
    BadWeight(f64),
    #[error("normalizer: input points span a degenerate bounding box")]
    DegenerateBounds,
    #[error(transparent)]
    Nn(#[from] NnError),
}
