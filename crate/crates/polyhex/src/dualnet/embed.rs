//! Timestep embedding: fixed sinusoid followed by a learned affine map.

use crate::nn::params::ParameterStore;
use crate::nn::tape::TensorTape;
use crate::nn::tensor::{self, Tensor};
use crate::nn::NnError;

/// Standard transformer sinusoid over `d/2` frequency pairs:
/// `out[2i] = sin(t * w_i)`, `out[2i+1] = cos(t * w_i)` with
/// `w_i = 10000^(-2i/d)`. `t = 0` gives `[0, 1, 0, 1, ...]`.
pub fn sinusoid(t: usize, d: usize) -> Tensor {
    debug_assert!(d % 2 == 0, "sinusoid width must be even");
    let mut data = vec![0.0; d];
    for i in 0..d / 2 {
        let w = 10000f64.powf(-2.0 * i as f64 / d as f64);
        let arg = t as f64 * w;
        data[2 * i] = arg.sin();
        data[2 * i + 1] = arg.cos();
    }
    Tensor::from_vec(vec![1, d], data).expect("shape matches by construction")
}

/// `sinusoid(t) @ W + b` with the learned map under `{prefix}.time`.
pub fn embed_time_plain(
    params: &ParameterStore,
    prefix: &str,
    t: usize,
    d: usize,
) -> Result<Tensor, NnError> {
    let s = sinusoid(t, d);
    let w = params.get(&format!("{prefix}.time.w"))?;
    let b = params.get(&format!("{prefix}.time.b"))?;
    tensor::add_row(&tensor::matmul(&s, w)?, b)
}

/// Tape-recorded variant; `ids` maps parameter names to tape leaves.
pub fn embed_time_taped(
    tape: &mut TensorTape,
    ids: &std::collections::BTreeMap<String, usize>,
    prefix: &str,
    t: usize,
    d: usize,
) -> Result<usize, NnError> {
    let s = tape.leaf(sinusoid(t, d));
    let w = *ids
        .get(&format!("{prefix}.time.w"))
        .ok_or_else(|| NnError::Params(format!("{prefix}.time.w not on tape")))?;
    let b = *ids
        .get(&format!("{prefix}.time.b"))
        .ok_or_else(|| NnError::Params(format!("{prefix}.time.b not on tape")))?;
    let m = tape.matmul(s, w)?;
    tape.add_row(m, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn t_zero_alternates_zero_one() {
        let s = sinusoid(0, 8);
        assert_eq!(s.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    /// Exhaustive scan: all steps up to 1024 embed distinctly.
    #[test]
    fn no_collisions_through_1024() {
        let d = 16;
        let embeds: Vec<Tensor> = (1..=1024).map(|t| sinusoid(t, d)).collect();
        let mut min_dist = f64::INFINITY;
        for i in 0..embeds.len() {
            for j in (i + 1)..embeds.len() {
                let dist: f64 = embeds[i]
                    .data()
                    .iter()
                    .zip(embeds[j].data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                min_dist = min_dist.min(dist);
            }
        }
        assert!(min_dist > 1e-6, "min pairwise distance {min_dist}");
    }

    #[test]
    fn zeroed_affine_returns_bias() {
        let d = 8;
        let mut params = ParameterStore::new();
        params.add_zeros("den.time.w", vec![d, d]).unwrap();
        params
            .insert(
                "den.time.b",
                Tensor::from_vec(vec![d], (0..d).map(|i| i as f64).collect()).unwrap(),
            )
            .unwrap();
        let e = embed_time_plain(&params, "den", 17, d).unwrap();
        assert_eq!(e.data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn plain_and_taped_agree_bitwise() {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = ParameterStore::new();
        params.add_normal("den.time.w", vec![d, d], 0.5, &mut rng).unwrap();
        params.add_normal("den.time.b", vec![d], 0.5, &mut rng).unwrap();
        let plain = embed_time_plain(&params, "den", 33, d).unwrap();

        let mut tape = TensorTape::new();
        let ids = params
            .iter()
            .map(|(n, t)| (n.clone(), tape.leaf(t.clone())))
            .collect();
        let id = embed_time_taped(&mut tape, &ids, "den", 33, d).unwrap();
        assert_eq!(tape.value(id).data(), plain.data());
    }
}
