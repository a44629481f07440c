//! Optimizer and the single-step training loop.
//!
//! One call to [`Model::train_step`] is one gradient update: noise the batch,
//! run the taped forward, backpropagate the hybrid loss, and apply AdamW with
//! a cosine-decayed learning rate. All randomness flows through the caller's
//! RNG so runs replay exactly.

use std::collections::BTreeMap;

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::diffusion::forward::forward_sample;
use crate::diffusion::loss::tape_loss_hybrid;
use crate::diffusion::schedule::NoiseSchedule;
use crate::nn::params::ParameterStore;
use crate::nn::tape::TensorTape;
use crate::nn::tensor::Tensor;

use super::blocks::{denoise_taped, encode_condition_taped, leaf_params};
use super::{DualnetError, Model};

/// Hyperparameters for one training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    /// Initial learning rate; decays to zero over `total_steps`.
    pub lr: f64,
    /// Decoupled weight decay coefficient.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Length of the cosine schedule. Steps past this run at lr 0.
    pub total_steps: usize,
}

impl TrainConfig {
    pub fn new(total_steps: usize) -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            total_steps,
        }
    }
}

/// Cosine decay: full `lr0` at step 0, exactly 0 at step `total - 1`.
pub fn cosine_lr(lr0: f64, step: usize, total: usize) -> f64 {
    if total <= 1 || step + 1 >= total {
        return if step == 0 && total <= 1 { lr0 } else { 0.0 };
    }
    let frac = step as f64 / (total - 1) as f64;
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// AdamW state: first/second moment per parameter plus the step counter that
/// drives both bias correction and the lr schedule.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: TrainConfig,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    step: usize,
}

impl AdamW {
    pub fn new(cfg: TrainConfig) -> Self {
        Self {
            cfg,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            step: 0,
        }
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Learning rate the next update will use.
    pub fn current_lr(&self) -> f64 {
        cosine_lr(self.cfg.lr, self.step, self.cfg.total_steps)
    }

    /// Applies one decoupled-weight-decay Adam update in place.
    pub fn update(&mut self, params: &mut ParameterStore, grads: &BTreeMap<String, Vec<f64>>) {
        let lr = self.current_lr();
        let k = (self.step + 1) as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(k);
        let bc2 = 1.0 - self.cfg.beta2.powi(k);
        for (name, p) in params.iter_mut() {
            if !p.requires_grad() {
                continue;
            }
            let numel = p.numel();
            let zero = vec![0.0; numel];
            let g = grads.get(name).map(|v| v.as_slice()).unwrap_or(&zero);
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; numel]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; numel]);
            let data = p.data_mut();
            for i in 0..numel {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -=
                    lr * (m_hat / (v_hat.sqrt() + self.cfg.eps) + self.cfg.weight_decay * data[i]);
            }
        }
        self.step += 1;
    }
}

/// Which noise-prediction loss a training run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// `w * L2 + (1 - w) * L1` with `w ~ U[0.4, 0.8)` drawn once per batch.
    Hybrid,
    /// Plain mean squared error.
    L2,
}

impl LossMode {
    /// Parses the CLI spelling.
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "hybrid" => Some(LossMode::Hybrid),
            "l2" => Some(LossMode::L2),
            _ => None,
        }
    }
}

impl Model {
    /// One training step over a batch of `(condition, clean cloud)` pairs.
    ///
    /// Per batch: one loss weight `w ~ U[0.4, 0.8)`. Per element: one step
    /// `t ~ U{1..T}` and fresh Gaussian noise. The batch loss is the mean of
    /// per-element hybrid losses; returns it after applying the update.
    pub fn train_step<R: Rng>(
        &mut self,
        batch: &[(Tensor, Tensor)],
        opt: &mut AdamW,
        sched: &NoiseSchedule,
        rng: &mut R,
    ) -> Result<f64, DualnetError> {
        self.train_step_with(batch, opt, sched, rng, LossMode::Hybrid)
    }

    /// [`Self::train_step`] with an explicit loss choice. The weight draw
    /// happens in both modes (L2 discards it), so two runs from the same
    /// seed see identical timesteps and noise regardless of the loss — the
    /// comparison then isolates the loss function itself.
    pub fn train_step_with<R: Rng>(
        &mut self,
        batch: &[(Tensor, Tensor)],
        opt: &mut AdamW,
        sched: &NoiseSchedule,
        rng: &mut R,
        mode: LossMode,
    ) -> Result<f64, DualnetError> {
        if batch.is_empty() {
            return Err(DualnetError::EmptyData);
        }
        let drawn = rng.random_range(0.4..0.8);
        let w = match mode {
            LossMode::Hybrid => drawn,
            LossMode::L2 => 1.0,
        };

        let mut tape = TensorTape::new();
        let ids = leaf_params(&mut tape, &self.params);
        let mut loss_ids = Vec::with_capacity(batch.len());
        for (g, x0) in batch {
            let t = rng.random_range(1..=sched.steps());
            let noise_data: Vec<f64> =
                (0..x0.numel()).map(|_| rng.sample(StandardNormal)).collect();
            let noise = Tensor::from_vec(x0.shape().to_vec(), noise_data)?;
            let sample = forward_sample(x0, t, &noise, sched)?;

            let g_id = tape.leaf(g.clone());
            let z_c = encode_condition_taped(&mut tape, &ids, &self.encoder, g_id)?;
            let xt_id = tape.leaf(sample.xt);
            let eps_hat = denoise_taped(&mut tape, &ids, &self.denoiser, xt_id, z_c, t)?;
            let eps_id = tape.leaf(sample.eps);
            loss_ids.push(tape_loss_hybrid(&mut tape, eps_hat, eps_id, w)?);
        }

        let mut acc = loss_ids[0];
        for &l in &loss_ids[1..] {
            acc = tape.add(acc, l)?;
        }
        let mean = tape.scale(acc, 1.0 / batch.len() as f64);

        let loss = tape.value(mean).data()[0];
        if !loss.is_finite() {
            return Err(DualnetError::NonFiniteLoss {
                step: opt.step_count(),
                loss,
            });
        }
        tape.backward(mean)?;

        let grads: BTreeMap<String, Vec<f64>> = ids
            .iter()
            .filter_map(|(name, &id)| tape.grad(id).map(|g| (name.clone(), g.to_vec())))
            .collect();
        opt.update(&mut self.params, &grads);
        Ok(loss)
    }

    /// Loss and parameter gradients for one frozen example, via the tape.
    /// This is the probe surface for finite-difference validation: all
    /// sampled quantities (`t`, the corrupted cloud, the weight) are inputs,
    /// so repeated calls are deterministic.
    pub fn training_grads(
        &self,
        g: &Tensor,
        xt: &Tensor,
        t: usize,
        target: &Tensor,
        w: f64,
    ) -> Result<(f64, crate::nn::GradMap), DualnetError> {
        let mut tape = TensorTape::new();
        let ids = leaf_params(&mut tape, &self.params);
        let gid = tape.leaf(g.clone());
        let z = encode_condition_taped(&mut tape, &ids, &self.encoder, gid)?;
        let xid = tape.leaf(xt.clone());
        let eps = denoise_taped(&mut tape, &ids, &self.denoiser, xid, z, t)?;
        let tid = tape.leaf(target.clone());
        let root = tape_loss_hybrid(&mut tape, eps, tid, w).map_err(DualnetError::Nn)?;
        tape.backward(root).map_err(DualnetError::Nn)?;
        let grads = ids
            .iter()
            .map(|(n, &i)| {
                let numel = tape.value(i).numel();
                let grad = tape
                    .grad(i)
                    .map(|s| s.to_vec())
                    .unwrap_or_else(|| vec![0.0; numel]);
                (n.clone(), grad)
            })
            .collect();
        Ok((tape.value(root).data()[0], grads))
    }
}

/// The same loss as [`Model::training_grads`] evaluated on an arbitrary
/// parameter store (the streaming path; bit-identical to the taped value).
/// Free-standing so a finite-difference probe can perturb the store while
/// the owning model's configs describe the wiring.
pub fn training_loss(
    encoder: &super::EncoderConfig,
    denoiser: &super::DenoiserConfig,
    params: &ParameterStore,
    g: &Tensor,
    xt: &Tensor,
    t: usize,
    target: &Tensor,
    w: f64,
) -> Result<f64, DualnetError> {
    let z = super::infer::encode_condition_plain(params, encoder, g, None)?;
    let eps = super::infer::denoise_plain(params, denoiser, xt, &z, t, None)?;
    Ok(crate::diffusion::loss::loss_hybrid(&eps, target, w)?)
}
