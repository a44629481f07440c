//! Finite-difference validation of analytic gradients.
//!
//! Probes random coordinates of each trainable parameter, recomputes the
//! loss at +/- h, and compares the central difference against the analytic
//! gradient. The caller supplies a deterministic loss closure: any sampled
//! quantities inside the loss (timesteps, noise, loss mix) must be frozen,
//! or the difference quotient measures the sampling, not the gradient.

use std::collections::BTreeMap;

use rand::{Rng, RngExt};

use super::params::ParameterStore;
use super::NnError;

/// Analytic gradients keyed by parameter name, one value per entry.
pub type GradMap = BTreeMap<String, Vec<f64>>;

/// Relative-error denominator floor. Central differences at h=1e-5 carry
/// ~1e-9 absolute noise; the floor keeps zero-gradient coordinates from
/// turning that noise into a large relative error.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Outcome of one finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Coordinates probed across all parameters.
    pub probes: usize,
    pub max_abs_err: f64,
    /// Maximum of |fd - analytic| / max(|fd|, |analytic|, REL_ERR_FLOOR).
    pub max_rel_err: f64,
    /// Location and values of the worst relative error.
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Probes up to `probes_per_param` random coordinates of every trainable
/// parameter. `grads` must hold an analytic gradient for each of them;
/// frozen parameters are skipped entirely.
pub fn finite_diff_check<R, F>(
    params: &mut ParameterStore,
    grads: &GradMap,
    mut loss: F,
    probes_per_param: usize,
    h: f64,
    rng: &mut R,
) -> Result<GradCheckReport, NnError>
where
    R: Rng,
    F: FnMut(&ParameterStore) -> Result<f64, NnError>,
{
    let names: Vec<String> = params
        .iter()
        .filter(|(_, t)| t.requires_grad())
        .map(|(n, _)| n.clone())
        .collect();

    let mut report = GradCheckReport {
        probes: 0,
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };

    for name in names {
        let numel = params.get(&name)?.numel();
        let analytic = grads
            .get(&name)
            .ok_or_else(|| NnError::Params(format!("no analytic gradient for {name:?}")))?;
        if analytic.len() != numel {
            return Err(NnError::Params(format!(
                "gradient for {name:?} has {} entries, parameter has {numel}",
                analytic.len()
            )));
        }

        for idx in sample_indices(numel, probes_per_param, rng) {
            let original = params.get(&name)?.data()[idx];
            params.get_mut(&name)?.data_mut()[idx] = original + h;
            let up = loss(params)?;
            params.get_mut(&name)?.data_mut()[idx] = original - h;
            let down = loss(params)?;
            params.get_mut(&name)?.data_mut()[idx] = original;

            let fd = (up - down) / (2.0 * h);
            let an = analytic[idx];
            let abs_err = (fd - an).abs();
            let rel_err = abs_err / fd.abs().max(an.abs()).max(REL_ERR_FLOOR);
            report.probes += 1;
            report.max_abs_err = report.max_abs_err.max(abs_err);
            if rel_err > report.max_rel_err {
                report.max_rel_err = rel_err;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.worst_analytic = an;
                report.worst_numeric = fd;
            }
        }
    }
    Ok(report)
}

/// Up to `k` distinct indices from `0..n`, via partial Fisher-Yates.
fn sample_indices<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::TensorTape;
    use crate::nn::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two-layer GELU MLP squared-output loss over a fixed input batch.
    fn mlp_loss(params: &ParameterStore, x: &Tensor) -> Result<(f64, GradMap), NnError> {
        let mut tape = TensorTape::new();
        let xid = tape.leaf(x.clone());
        let ids: BTreeMap<String, usize> = params
            .iter()
            .map(|(n, t)| (n.clone(), tape.leaf(t.clone())))
            .collect();
        let h1m = tape.matmul(xid, ids["w1"])?;
        let h1b = tape.add_row(h1m, ids["b1"])?;
        let h1 = tape.gelu(h1b);
        let out = tape.matmul(h1, ids["w2"])?;
        let sq = tape.mul(out, out)?;
        let root = tape.mean_all(sq);
        tape.backward(root)?;
        let grads = ids
            .iter()
            .map(|(n, &id)| (n.clone(), tape.grad(id).unwrap_or(&[]).to_vec()))
            .collect();
        Ok((tape.value(root).data()[0], grads))
    }

    fn setup() -> (ParameterStore, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParameterStore::new();
        params.add_normal("w1", vec![3, 4], 0.5, &mut rng).unwrap();
        params.add_normal("b1", vec![4], 0.5, &mut rng).unwrap();
        params.add_normal("w2", vec![4, 1], 0.5, &mut rng).unwrap();
        let x = Tensor::from_vec(
            vec![2, 3],
            vec![0.3, -0.7, 1.1, -0.2, 0.9, 0.4],
        )
        .unwrap();
        (params, x)
    }

    #[test]
    fn correct_gradients_pass() {
        let (mut params, x) = setup();
        let (_, grads) = mlp_loss(&params, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = finite_diff_check(
            &mut params,
            &grads,
            |p| mlp_loss(p, &x).map(|(l, _)| l),
            16,
            1e-5,
            &mut rng,
        )
        .unwrap();
        // All three tensors are small, so every coordinate is probed.
        assert_eq!(report.probes, 12 + 4 + 4);
        assert!(
            report.max_rel_err < 1e-6,
            "rel err {} at {}[{}]",
            report.max_rel_err,
            report.worst_param,
            report.worst_index
        );
    }

    /// Prediction: corrupting one analytic gradient entry by 0.1 must push
    /// the relative error to ~1 and point the report at that entry. If this
    /// passes with a small error instead, the checker compares nothing.
    #[test]
    fn corrupted_gradient_is_caught_and_located() {
        let (mut params, x) = setup();
        let (_, mut grads) = mlp_loss(&params, &x).unwrap();
        grads.get_mut("b1").unwrap()[2] += 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let report = finite_diff_check(
            &mut params,
            &grads,
            |p| mlp_loss(p, &x).map(|(l, _)| l),
            16,
            1e-5,
            &mut rng,
        )
        .unwrap();
        assert!(report.max_rel_err > 0.1, "rel err {}", report.max_rel_err);
        assert_eq!(report.worst_param, "b1");
        assert_eq!(report.worst_index, 2);
        assert!((report.max_abs_err - 0.1).abs() < 1e-6);
    }

    #[test]
    fn missing_gradient_entry_is_typed_error() {
        let (mut params, x) = setup();
        let (_, mut grads) = mlp_loss(&params, &x).unwrap();
        grads.remove("w2");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = finite_diff_check(
            &mut params,
            &grads,
            |p| mlp_loss(p, &x).map(|(l, _)| l),
            4,
            1e-5,
            &mut rng,
        );
        assert!(matches!(err, Err(NnError::Params(_))));
    }

    #[test]
    fn probe_budget_caps_work() {
        let (mut params, x) = setup();
        let (_, grads) = mlp_loss(&params, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let report = finite_diff_check(
            &mut params,
            &grads,
            |p| mlp_loss(p, &x).map(|(l, _)| l),
            2,
            1e-5,
            &mut rng,
        )
        .unwrap();
        // Three tensors, two probes each.
        assert_eq!(report.probes, 6);
    }
}
