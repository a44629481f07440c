//! Linear-beta noise schedule with cumulative signal products.

use super::DiffusionError;

pub const DEFAULT_STEPS: usize = 1024;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Per-step noise rates and their cumulative products.
///
/// Indexing is 1-based to match the process convention: `beta(t)` for
/// `t in 1..=T`, `alpha_bar(t)` for `t in 0..=T` with `alpha_bar(0) = 1`.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    /// `T + 1` entries; `alpha_bar[t]` is the product of `alpha[1..=t]`.
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear interpolation `beta_t = beta_start + (t-1)/(T-1) * (beta_end -
    /// beta_start)`; a single-step schedule uses `beta_start` alone.
    pub fn build(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self, DiffusionError> {
        if steps == 0 {
            return Err(DiffusionError::BadStepCount);
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(DiffusionError::BadBetaRange {
                beta_start,
                beta_end,
            });
        }
        let mut beta = Vec::with_capacity(steps);
        let mut alpha = Vec::with_capacity(steps);
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        for t in 1..=steps {
            let b = if steps == 1 {
                beta_start
            } else {
                beta_start + (t - 1) as f64 / (steps - 1) as f64 * (beta_end - beta_start)
            };
            let a = 1.0 - b;
            beta.push(b);
            alpha.push(a);
            alpha_bar.push(alpha_bar[t - 1] * a);
        }
        Ok(NoiseSchedule {
            beta,
            alpha,
            alpha_bar,
        })
    }

    pub fn default_schedule() -> Self {
        // Valid by construction of the defaults.
        Self::build(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).unwrap()
    }

    /// Step count `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// `beta_t`, `t in 1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps(), "beta index {t} out of range");
        self.beta[t - 1]
    }

    /// `alpha_t = 1 - beta_t`, `t in 1..=T`.
    pub fn alpha(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps(), "alpha index {t} out of range");
        self.alpha[t - 1]
    }

    /// Cumulative signal fraction, `t in 0..=T`; `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        assert!(t <= self.steps(), "alpha_bar index {t} out of range");
        self.alpha_bar[t]
    }
}
