//! Noise-prediction losses: plain evaluation and the tape-recorded variant
//! used during training. Both are built from the same tensor kernels, so
//! they agree bitwise.

use crate::nn::tape::TensorTape;
use crate::nn::tensor::{self, Tensor};
use crate::nn::NnError;

use super::DiffusionError;

/// Mean squared error over all entries.
pub fn loss_l2(pred: &Tensor, truth: &Tensor) -> Result<f64, DiffusionError> {
    let diff = tensor::sub(pred, truth).map_err(DiffusionError::Nn)?;
    let sq = tensor::mul(&diff, &diff).map_err(DiffusionError::Nn)?;
    Ok(tensor::mean_all(&sq))
}

/// Mean absolute error over all entries.
pub fn loss_l1(pred: &Tensor, truth: &Tensor) -> Result<f64, DiffusionError> {
    let diff = tensor::sub(pred, truth).map_err(DiffusionError::Nn)?;
    Ok(tensor::mean_all(&tensor::abs(&diff)))
}

/// `w * L2 + (1 - w) * L1`. The caller draws `w` from U[0.4, 0.8) once per
/// training iteration; any `w` in [0,1] is accepted here.
pub fn loss_hybrid(pred: &Tensor, truth: &Tensor, w: f64) -> Result<f64, DiffusionError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(DiffusionError::BadWeight(w));
    }
    Ok(w * loss_l2(pred, truth)? + (1.0 - w) * loss_l1(pred, truth)?)
}

/// Tape-recorded hybrid loss; returns the scalar node id.
pub fn tape_loss_hybrid(
    tape: &mut TensorTape,
    pred: usize,
    truth: usize,
    w: f64,
) -> Result<usize, NnError> {
    let diff = tape.sub(pred, truth)?;
    let sq = tape.mul(diff, diff)?;
    let l2 = tape.mean_all(sq);
    let ab = tape.abs(diff);
    let l1 = tape.mean_all(ab);
    let lhs = tape.scale(l2, w);
    let rhs = tape.scale(l1, 1.0 - w);
    tape.add(lhs, rhs)
}
