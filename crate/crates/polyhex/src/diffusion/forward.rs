//! Closed-form forward corruption: `x_t = sqrt(ab_t) x_0 + sqrt(1-ab_t) eps`.

use crate::nn::tensor::Tensor;
use crate::nn::NnError;

use super::schedule::NoiseSchedule;
use super::DiffusionError;

/// One corrupted training example; `xt` satisfies the closed form exactly
/// by construction.
#[derive(Debug, Clone)]
pub struct DiffusionSample {
    pub x0: Tensor,
    pub xt: Tensor,
    pub eps: Tensor,
    pub t: usize,
}

/// Corrupts `x0` to step `t` with externally drawn `noise`. `t = 0` is the
/// identity by the `alpha_bar(0) = 1` convention.
pub fn forward_sample(
    x0: &Tensor,
    t: usize,
    noise: &Tensor,
    sched: &NoiseSchedule,
) -> Result<DiffusionSample, DiffusionError> {
    if t > sched.steps() {
        return Err(DiffusionError::StepOutOfRange {
            t,
            max: sched.steps(),
        });
    }
    if x0.shape() != noise.shape() {
        return Err(NnError::ShapeMismatch {
            op: "forward_sample",
            lhs: x0.shape().to_vec(),
            rhs: noise.shape().to_vec(),
        }
        .into());
    }
    let ab = sched.alpha_bar(t);
    let signal = ab.sqrt();
    let sigma = (1.0 - ab).sqrt();
    let data: Vec<f64> = x0
        .data()
        .iter()
        .zip(noise.data())
        .map(|(x, e)| signal * x + sigma * e)
        .collect();
    let xt = Tensor::from_vec(x0.shape().to_vec(), data).map_err(DiffusionError::Nn)?;
    Ok(DiffusionSample {
        x0: x0.clone(),
        xt,
        eps: noise.clone(),
        t,
    })
}
