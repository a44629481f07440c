//! Strided deterministic sampler: Gaussian start, DDIM ladder down to zero.

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::nn::tensor::Tensor;
use crate::POINT_CHANNELS;

use super::ddim::ddim_step;
use super::schedule::NoiseSchedule;
use super::DiffusionError;

/// Anything that predicts the injected noise for a cloud at one step.
/// Implemented by the conditioned denoiser; `&mut` admits call counters and
/// per-step caches.
pub trait NoisePredictor {
    fn predict(&mut self, xt: &Tensor, t: usize) -> Result<Tensor, DiffusionError>;
}

impl<F> NoisePredictor for F
where
    F: FnMut(&Tensor, usize) -> Result<Tensor, DiffusionError>,
{
    fn predict(&mut self, xt: &Tensor, t: usize) -> Result<Tensor, DiffusionError> {
        self(xt, t)
    }
}

/// A finished sampling run.
#[derive(Debug)]
pub struct SampleRun {
    /// `[M, 6]`, normal channels unit length.
    pub cloud: Tensor,
    /// Exactly `ceil(T / stride)` for a full ladder.
    pub denoiser_calls: usize,
}

/// Descending step sequence `T, T-stride, ..., 0`; the final hop to zero is
/// shortened when stride does not divide T.
pub fn step_ladder(steps: usize, stride: usize) -> Result<Vec<usize>, DiffusionError> {
    if stride == 0 {
        return Err(DiffusionError::BadStride);
    }
    if steps == 0 {
        return Err(DiffusionError::BadStepCount);
    }
    let mut ladder = vec![steps];
    let mut k = 1usize;
    loop {
        let t = steps.saturating_sub(k * stride);
        ladder.push(t);
        if t == 0 {
            return Ok(ladder);
        }
        k += 1;
    }
}

/// Draws `x_T ~ N(0, I)` of shape `[m, 6]` and walks the ladder with one
/// denoiser call per rung. Deterministic given the RNG state and predictor.
pub fn sample<P: NoisePredictor, R: Rng>(
    predictor: &mut P,
    m: usize,
    stride: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<SampleRun, DiffusionError> {
    if m == 0 {
        return Err(DiffusionError::EmptyCloud);
    }
    let ladder = step_ladder(sched.steps(), stride)?;
    let data: Vec<f64> = (0..m * POINT_CHANNELS)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut x = Tensor::from_vec(vec![m, POINT_CHANNELS], data).map_err(DiffusionError::Nn)?;

    let mut calls = 0;
    for pair in ladder.windows(2) {
        let (t, t_prev) = (pair[0], pair[1]);
        let eps_hat = predictor.predict(&x, t)?;
        calls += 1;
        if !eps_hat.is_finite() {
            return Err(crate::nn::NnError::NonFinite { op: "predict" }.into());
        }
        x = ddim_step(&x, &eps_hat, t, t_prev, sched)?;
    }

    normalize_normals(&mut x);
    Ok(SampleRun {
        cloud: x,
        denoiser_calls: calls,
    })
}

/// Rescales channels 3..6 of every row to unit length; rows whose normal
/// part is exactly zero are left untouched (nothing to normalize).
pub fn normalize_normals(cloud: &mut Tensor) {
    let c = cloud.cols();
    debug_assert_eq!(c, POINT_CHANNELS);
    let rows = cloud.rows();
    let data = cloud.data_mut();
    for i in 0..rows {
        let n = &mut data[i * c + 3..i * c + 6];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len > 0.0 {
            n[0] /= len;
            n[1] /= len;
            n[2] /= len;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_predictor(xt: &Tensor, _t: usize) -> Result<Tensor, DiffusionError> {
        Ok(Tensor::zeros(xt.shape().to_vec()))
    }

    #[test]
    fn ladder_shapes() {
        assert_eq!(step_ladder(1024, 1024).unwrap(), vec![1024, 0]);
        let l = step_ladder(1024, 4).unwrap();
        assert_eq!(l.len(), 257);
        assert_eq!(l[0], 1024);
        assert_eq!(l[1], 1020);
        assert_eq!(*l.last().unwrap(), 0);
        // Stride not dividing T: last hop shortens.
        assert_eq!(step_ladder(5, 2).unwrap(), vec![5, 3, 1, 0]);
        assert!(matches!(step_ladder(5, 0), Err(DiffusionError::BadStride)));
    }

    #[test]
    fn default_schedule_stride_four_makes_256_calls() {
        let sched = NoiseSchedule::default_schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let run = sample(&mut zero_predictor, 3, 4, &sched, &mut rng).unwrap();
        assert_eq!(run.denoiser_calls, 256);
        assert_eq!(run.cloud.shape(), &[3, 6]);
        assert!(run.cloud.is_finite());
    }

    #[test]
    fn stride_equal_to_t_is_single_call() {
        let sched = NoiseSchedule::build(64, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let run = sample(&mut zero_predictor, 2, 64, &sched, &mut rng).unwrap();
        assert_eq!(run.denoiser_calls, 1);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let sched = NoiseSchedule::build(32, 1e-4, 0.02).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(77);
        let mut b = ChaCha8Rng::seed_from_u64(77);
        let r1 = sample(&mut zero_predictor, 4, 8, &sched, &mut a).unwrap();
        let r2 = sample(&mut zero_predictor, 4, 8, &sched, &mut b).unwrap();
        assert_eq!(r1.cloud.data(), r2.cloud.data());
    }

    #[test]
    fn output_normals_are_unit_length() {
        let sched = NoiseSchedule::build(32, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let run = sample(&mut zero_predictor, 16, 8, &sched, &mut rng).unwrap();
        for i in 0..16 {
            let r = run.cloud.row(i);
            let len = (r[3] * r[3] + r[4] * r[4] + r[5] * r[5]).sqrt();
            assert!((len - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cloud_rejected() {
        let sched = NoiseSchedule::build(8, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample(&mut zero_predictor, 0, 4, &sched, &mut rng),
            Err(DiffusionError::EmptyCloud)
        ));
    }

    #[test]
    fn non_finite_prediction_aborts() {
        let sched = NoiseSchedule::build(8, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bad = |xt: &Tensor, _t: usize| -> Result<Tensor, DiffusionError> {
            let mut z = Tensor::zeros(xt.shape().to_vec());
            z.data_mut()[0] = f64::NAN;
            Ok(z)
        };
        assert!(sample(&mut bad, 2, 4, &sched, &mut rng).is_err());
    }
}
