//! Tape-recorded forward wiring, used for training and gradient checks.
//!
//! Mirrors [`super::infer`] op for op over the same kernels; the only
//! difference is that every intermediate lands on a [`TensorTape`] so
//! [`TensorTape::backward`] can reach the parameters. A test pins bitwise
//! agreement between the two paths.

use std::collections::BTreeMap;

use crate::nn::attention::{multi_head_attention_taped, AttentionWeightIds};
use crate::nn::params::ParameterStore;
use crate::nn::tape::TensorTape;
use crate::nn::NnError;

use super::embed::embed_time_taped;
use super::{BlockConfig, DenoiserConfig, DualnetError, EncoderConfig};

/// Registers every parameter as a tape leaf; the returned map is how wiring
/// code and the optimizer address gradients.
pub fn leaf_params(tape: &mut TensorTape, ps: &ParameterStore) -> BTreeMap<String, usize> {
    ps.iter()
        .map(|(name, t)| (name.clone(), tape.leaf(t.clone())))
        .collect()
}

fn id(ids: &BTreeMap<String, usize>, name: &str) -> Result<usize, NnError> {
    ids.get(name)
        .copied()
        .ok_or_else(|| NnError::Params(format!("{name:?} not on tape")))
}

fn ln_taped(
    tape: &mut TensorTape,
    ids: &BTreeMap<String, usize>,
    prefix: &str,
    x: usize,
) -> Result<usize, NnError> {
    let gain = id(ids, &format!("{prefix}.gain"))?;
    let bias = id(ids, &format!("{prefix}.bias"))?;
    tape.layer_norm(x, gain, bias)
}

fn attn_ids(ids: &BTreeMap<String, usize>, prefix: &str) -> Result<AttentionWeightIds, NnError> {
    Ok(AttentionWeightIds {
        wq: id(ids, &format!("{prefix}.wq"))?,
        bq: id(ids, &format!("{prefix}.bq"))?,
        wk: id(ids, &format!("{prefix}.wk"))?,
        bk: id(ids, &format!("{prefix}.bk"))?,
        wv: id(ids, &format!("{prefix}.wv"))?,
        bv: id(ids, &format!("{prefix}.bv"))?,
        wo: id(ids, &format!("{prefix}.wo"))?,
        bo: id(ids, &format!("{prefix}.bo"))?,
    })
}

pub fn featurize_taped(
    tape: &mut TensorTape,
    ids: &BTreeMap<String, usize>,
    prefix: &str,
    pts: usize,
) -> Result<usize, NnError> {
    let w1 = id(ids, &format!("{prefix}.feat.w1"))?;
    let b1 = id(ids, &format!("{prefix}.feat.b1"))?;
    let w2 = id(ids, &format!("{prefix}.feat.w2"))?;
    let b2 = id(ids, &format!("{prefix}.feat.b2"))?;
    let m1 = tape.matmul(pts, w1)?;
    let a1 = tape.add_row(m1, b1)?;
    let g = tape.gelu(a1);
    let m2 = tape.matmul(g, w2)?;
    tape.add_row(m2, b2)
}

/// Taped two-stream block; see [`super::infer::two_stream_forward`] for the
/// dataflow.
pub fn two_stream_taped(
    tape: &mut TensorTape,
    ids: &BTreeMap<String, usize>,
    prefix: &str,
    x: usize,
    z: usize,
    cfg: &BlockConfig,
) -> Result<(usize, usize), DualnetError> {
    if tape.value(x).rows() == 0 {
        return Err(DualnetError::EmptyData);
    }

    let zq = ln_taped(tape, ids, &format!("{prefix}.read.ln_q"), z)?;
    let xkv = ln_taped(tape, ids, &format!("{prefix}.read.ln_kv"), x)?;
    let read_w = attn_ids(ids, &format!("{prefix}.read"))?;
    let r = multi_head_attention_taped(tape, zq, xkv, &read_w, cfg.heads)?;
    let rs = tape.scale(r, cfg.read_scale);
    let mut z = tape.add(z, rs)?;

    for j in 0..cfg.layers {
        let lp = format!("{prefix}.layer{j}");
        let n1 = ln_taped(tape, ids, &format!("{lp}.ln1"), z)?;
        let attn_w = attn_ids(ids, &format!("{lp}.attn"))?;
        let a = multi_head_attention_taped(tape, n1, n1, &attn_w, cfg.heads)?;
        z = tape.add(z, a)?;
        let n2 = ln_taped(tape, ids, &format!("{lp}.ln2"), z)?;
        let m1 = tape.matmul(n2, id(ids, &format!("{lp}.ffn.w1"))?)?;
        let a1 = tape.add_row(m1, id(ids, &format!("{lp}.ffn.b1"))?)?;
        let h = tape.gelu(a1);
        let m2 = tape.matmul(h, id(ids, &format!("{lp}.ffn.w2"))?)?;
        let f = tape.add_row(m2, id(ids, &format!("{lp}.ffn.b2"))?)?;
        z = tape.add(z, f)?;
    }

    let xq = ln_taped(tape, ids, &format!("{prefix}.write.ln_q"), x)?;
    let zkv = ln_taped(tape, ids, &format!("{prefix}.write.ln_kv"), z)?;
    let write_w = attn_ids(ids, &format!("{prefix}.write"))?;
    let w = multi_head_attention_taped(tape, xq, zkv, &write_w, cfg.heads)?;
    let ws = tape.scale(w, cfg.write_scale);
    let x = tape.add(x, ws)?;

    Ok((x, z))
}

pub fn encode_condition_taped(
    tape: &mut TensorTape,
    ids: &BTreeMap<String, usize>,
    cfg: &EncoderConfig,
    g: usize,
) -> Result<usize, DualnetError> {
    if tape.value(g).rows() == 0 {
        return Err(DualnetError::EmptyCondition);
    }
    let mut x = featurize_taped(tape, ids, "enc", g)?;
    let mut z = id(ids, "enc.z_init")?;
    let block_cfg = BlockConfig::new(cfg.heads, cfg.layers_per_block);
    for i in 0..cfg.blocks {
        let (nx, nz) = two_stream_taped(tape, ids, &format!("enc.block{i}"), x, z, &block_cfg)?;
        x = nx;
        z = nz;
    }
    Ok(z)
}

pub fn denoise_taped(
    tape: &mut TensorTape,
    ids: &BTreeMap<String, usize>,
    cfg: &DenoiserConfig,
    xt: usize,
    z_c: usize,
    t: usize,
) -> Result<usize, DualnetError> {
    if tape.value(xt).rows() == 0 {
        return Err(DualnetError::EmptyData);
    }
    if tape.value(z_c).cols() != cfg.d_model {
        return Err(DualnetError::WidthMismatch {
            expected: cfg.d_model,
            got: tape.value(z_c).cols(),
        });
    }
    let mut x = featurize_taped(tape, ids, "den", xt)?;
    let time = embed_time_taped(tape, ids, "den", t, cfg.d_model)?;
    let z_init = id(ids, "den.z_init")?;
    let mut z = tape.concat_rows(&[z_c, z_init, time])?;
    let block_cfg = BlockConfig::new(cfg.heads, cfg.layers_per_block);
    for i in 0..cfg.blocks {
        let (nx, nz) = two_stream_taped(tape, ids, &format!("den.block{i}"), x, z, &block_cfg)?;
        x = nx;
        z = nz;
    }
    let h = ln_taped(tape, ids, "den.head.ln", x)?;
    let m = tape.matmul(h, id(ids, "den.head.w")?)?;
    Ok(tape.add_row(m, id(ids, "den.head.b")?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualnet::{tiny_configs, Model};
    use crate::nn::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fill(shape: &[usize], seed: u64) -> Tensor {
        let n: usize = shape.iter().product();
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
        let data: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        Tensor::from_vec(shape.to_vec(), data).unwrap()
    }

    /// The training path and the sampling path disagree by zero ULPs: a
    /// checkpoint behaves identically whichever wiring evaluates it.
    #[test]
    fn taped_forward_is_bit_identical_to_plain() {
        let (enc, den) = tiny_configs(16);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut model = Model::init(enc, den, &mut rng).unwrap();
        // Give zero-init tensors real values so the comparison is nontrivial.
        for name in ["enc.block0.write.wo", "enc.block1.write.wo", "den.block0.write.wo", "den.block1.write.wo", "den.head.w"] {
            let shape = model.params.get(name).unwrap().shape().to_vec();
            let data = fill(&shape, 1000 + name.len() as u64);
            model
                .params
                .get_mut(name)
                .unwrap()
                .data_mut()
                .copy_from_slice(data.data());
        }

        let g = fill(&[11, 3], 30);
        let xt = fill(&[7, 6], 31);
        let t_step = 13;

        let z_plain = model.encode_condition(&g).unwrap();
        let eps_plain = model.denoise(&xt, &z_plain, t_step).unwrap();

        let mut tape = TensorTape::new();
        let ids = leaf_params(&mut tape, &model.params);
        let gid = tape.leaf(g.clone());
        let z_taped = encode_condition_taped(&mut tape, &ids, &model.encoder, gid).unwrap();
        let xtid = tape.leaf(xt.clone());
        let eps_taped =
            denoise_taped(&mut tape, &ids, &model.denoiser, xtid, z_taped, t_step).unwrap();

        assert_eq!(tape.value(z_taped).data(), z_plain.data());
        assert_eq!(tape.value(eps_taped).data(), eps_plain.data());
    }

    /// End-to-end gradients through encoder + denoiser + loss match central
    /// differences. Small probe budget; the acceptance suite runs the full
    /// sweep at the contract tolerance.
    #[test]
    fn full_model_gradient_spot_check() {
        let (enc, den) = tiny_configs(8);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut model = Model::init(enc, den, &mut rng).unwrap();
        let g = fill(&[5, 3], 40);
        let xt = fill(&[5, 6], 41);
        let target = fill(&[5, 6], 42);
        let t_step = 3;

        let eval = |ps: &crate::nn::ParameterStore| -> Result<(f64, crate::nn::GradMap), DualnetError> {
            let mut tape = TensorTape::new();
            let ids = leaf_params(&mut tape, ps);
            let gid = tape.leaf(g.clone());
            let z = encode_condition_taped(&mut tape, &ids, &model.encoder, gid)?;
            let xid = tape.leaf(xt.clone());
            let eps = denoise_taped(&mut tape, &ids, &model.denoiser, xid, z, t_step)?;
            let tid = tape.leaf(target.clone());
            let root = crate::diffusion::loss::tape_loss_hybrid(&mut tape, eps, tid, 0.6)
                .map_err(DualnetError::Nn)?;
            tape.backward(root).map_err(DualnetError::Nn)?;
            let grads = ids
                .iter()
                .map(|(n, &i)| {
                    let numel = tape.value(i).numel();
                    let g = tape
                        .grad(i)
                        .map(|s| s.to_vec())
                        .unwrap_or_else(|| vec![0.0; numel]);
                    (n.clone(), g)
                })
                .collect();
            Ok((tape.value(root).data()[0], grads))
        };

        let (_, grads) = eval(&model.params).unwrap();
        let mut probe_rng = ChaCha8Rng::seed_from_u64(23);
        let report = crate::nn::gradcheck::finite_diff_check(
            &mut model.params,
            &grads,
            |ps| eval(ps).map(|(l, _)| l).map_err(|e| NnError::Params(e.to_string())),
            2,
            1e-5,
            &mut probe_rng,
        )
        .unwrap();
        assert!(
            report.max_rel_err < 1e-5,
            "rel err {} at {}[{}]",
            report.max_rel_err,
            report.worst_param,
            report.worst_index
        );
    }
}
