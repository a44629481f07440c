//! Streaming (no-tape) forward wiring for both networks.
//!
//! This is the inference path: nothing is retained per op, cross-attention
//! scores are chunked, and memory stays linear in the point count with a
//! small constant. The tape path in [`super::blocks`] applies the same
//! kernels in the same order, so both produce bit-identical outputs.

use crate::nn::attention::{multi_head_attention_plain, AttentionWeights};
use crate::nn::params::ParameterStore;
use crate::nn::tensor::{self, Tensor};
use crate::nn::NnError;

use super::embed::embed_time_plain;
use super::{BlockConfig, DenoiserConfig, DualnetError, EncoderConfig};

/// Instrumentation for the resolution-decoupling contract: token counts
/// entering each latent self-attention layer, in execution order.
#[derive(Debug, Default, Clone)]
pub struct ForwardStats {
    pub self_attn_token_counts: Vec<usize>,
}

fn ln_pair<'a>(
    ps: &'a ParameterStore,
    prefix: &str,
) -> Result<(&'a Tensor, &'a Tensor), NnError> {
    Ok((
        ps.get(&format!("{prefix}.gain"))?,
        ps.get(&format!("{prefix}.bias"))?,
    ))
}

fn attn_weights<'a>(
    ps: &'a ParameterStore,
    prefix: &str,
) -> Result<AttentionWeights<'a>, NnError> {
    Ok(AttentionWeights {
        wq: ps.get(&format!("{prefix}.wq"))?,
        bq: ps.get(&format!("{prefix}.bq"))?,
        wk: ps.get(&format!("{prefix}.wk"))?,
        bk: ps.get(&format!("{prefix}.bk"))?,
        wv: ps.get(&format!("{prefix}.wv"))?,
        bv: ps.get(&format!("{prefix}.bv"))?,
        wo: ps.get(&format!("{prefix}.wo"))?,
        bo: ps.get(&format!("{prefix}.bo"))?,
    })
}

fn layer_norm_named(ps: &ParameterStore, prefix: &str, x: &Tensor) -> Result<Tensor, NnError> {
    let (gain, bias) = ln_pair(ps, prefix)?;
    tensor::layer_norm(x, gain, bias)
}

/// Two-layer GELU MLP lifting raw point channels to `d_model`.
pub fn featurize_plain(
    ps: &ParameterStore,
    prefix: &str,
    pts: &Tensor,
) -> Result<Tensor, NnError> {
    let w1 = ps.get(&format!("{prefix}.feat.w1"))?;
    let b1 = ps.get(&format!("{prefix}.feat.b1"))?;
    let w2 = ps.get(&format!("{prefix}.feat.w2"))?;
    let b2 = ps.get(&format!("{prefix}.feat.b2"))?;
    let h = tensor::gelu(&tensor::add_row(&tensor::matmul(pts, w1)?, b1)?);
    tensor::add_row(&tensor::matmul(&h, w2)?, b2)
}

/// One two-stream block under `prefix`:
///
/// 1. read:  `z += read_scale * Attn(LN(z) -> LN(x))`
/// 2. latent: H pre-norm transformer layers (self-attention + GELU MLP)
/// 3. write: `x += write_scale * Attn(LN(x) -> LN(z'))`
///
/// Data tokens interact only through the latent bottleneck, so the count
/// and order of `x` rows never influence each other's outputs beyond what
/// the latent carries.
pub fn two_stream_forward(
    ps: &ParameterStore,
    prefix: &str,
    x: &Tensor,
    z: &Tensor,
    cfg: &BlockConfig,
    mut stats: Option<&mut ForwardStats>,
) -> Result<(Tensor, Tensor), DualnetError> {
    if x.rows() == 0 {
        return Err(DualnetError::EmptyData);
    }
    if x.cols() != z.cols() {
        return Err(DualnetError::WidthMismatch {
            expected: z.cols(),
            got: x.cols(),
        });
    }

    // Read cross-attention: latent queries, data keys/values.
    let zq = layer_norm_named(ps, &format!("{prefix}.read.ln_q"), z)?;
    let xkv = layer_norm_named(ps, &format!("{prefix}.read.ln_kv"), x)?;
    let read = multi_head_attention_plain(&zq, &xkv, &attn_weights(ps, &format!("{prefix}.read"))?, cfg.heads)?;
    let mut z = tensor::add(z, &tensor::scale(&read, cfg.read_scale))?;

    // Latent transformer layers.
    for j in 0..cfg.layers {
        if let Some(s) = stats.as_deref_mut() {
            s.self_attn_token_counts.push(z.rows());
        }
        let lp = format!("{prefix}.layer{j}");
        let n1 = layer_norm_named(ps, &format!("{lp}.ln1"), &z)?;
        let a = multi_head_attention_plain(&n1, &n1, &attn_weights(ps, &format!("{lp}.attn"))?, cfg.heads)?;
        z = tensor::add(&z, &a)?;
        let n2 = layer_norm_named(ps, &format!("{lp}.ln2"), &z)?;
        let h = tensor::gelu(&tensor::add_row(
            &tensor::matmul(&n2, ps.get(&format!("{lp}.ffn.w1"))?)?,
            ps.get(&format!("{lp}.ffn.b1"))?,
        )?);
        let f = tensor::add_row(
            &tensor::matmul(&h, ps.get(&format!("{lp}.ffn.w2"))?)?,
            ps.get(&format!("{lp}.ffn.b2"))?,
        )?;
        z = tensor::add(&z, &f)?;
    }

    // Write cross-attention: data queries, latent keys/values.
    let xq = layer_norm_named(ps, &format!("{prefix}.write.ln_q"), x)?;
    let zkv = layer_norm_named(ps, &format!("{prefix}.write.ln_kv"), &z)?;
    let write = multi_head_attention_plain(&xq, &zkv, &attn_weights(ps, &format!("{prefix}.write"))?, cfg.heads)?;
    let x = tensor::add(x, &tensor::scale(&write, cfg.write_scale))?;

    Ok((x, z))
}

/// Encoder forward: featurize the sample, run the block stack from the
/// learned initial latent, return the final latent stream.
pub fn encode_condition_plain(
    ps: &ParameterStore,
    cfg: &EncoderConfig,
    g: &Tensor,
    mut stats: Option<&mut ForwardStats>,
) -> Result<Tensor, DualnetError> {
    if g.rows() == 0 {
        return Err(DualnetError::EmptyCondition);
    }
    if g.cols() != cfg.input_channels {
        return Err(DualnetError::WidthMismatch {
            expected: cfg.input_channels,
            got: g.cols(),
        });
    }
    let mut x = featurize_plain(ps, "enc", g)?;
    let mut z = ps.get("enc.z_init")?.clone();
    let block_cfg = BlockConfig::new(cfg.heads, cfg.layers_per_block);
    for i in 0..cfg.blocks {
        let (nx, nz) =
            two_stream_forward(ps, &format!("enc.block{i}"), &x, &z, &block_cfg, stats.as_deref_mut())?;
        x = nx;
        z = nz;
    }
    Ok(z)
}

/// Denoiser forward: latent stream starts as `[z_c, learned tokens, time]`,
/// the data stream is the corrupted cloud, and the head reads noise off the
/// final data tokens.
pub fn denoise_plain(
    ps: &ParameterStore,
    cfg: &DenoiserConfig,
    xt: &Tensor,
    z_c: &Tensor,
    t: usize,
    mut stats: Option<&mut ForwardStats>,
) -> Result<Tensor, DualnetError> {
    if xt.rows() == 0 {
        return Err(DualnetError::EmptyData);
    }
    if xt.cols() != cfg.input_channels {
        return Err(DualnetError::WidthMismatch {
            expected: cfg.input_channels,
            got: xt.cols(),
        });
    }
    if z_c.cols() != cfg.d_model {
        return Err(DualnetError::WidthMismatch {
            expected: cfg.d_model,
            got: z_c.cols(),
        });
    }
    let mut x = featurize_plain(ps, "den", xt)?;
    let time = embed_time_plain(ps, "den", t, cfg.d_model)?;
    let mut z = tensor::concat_rows(&[z_c, ps.get("den.z_init")?, &time])?;
    let block_cfg = BlockConfig::new(cfg.heads, cfg.layers_per_block);
    for i in 0..cfg.blocks {
        let (nx, nz) =
            two_stream_forward(ps, &format!("den.block{i}"), &x, &z, &block_cfg, stats.as_deref_mut())?;
        x = nx;
        z = nz;
    }
    let h = layer_norm_named(ps, "den.head.ln", &x)?;
    let eps = tensor::add_row(
        &tensor::matmul(&h, ps.get("den.head.w")?)?,
        ps.get("den.head.b")?,
    )?;
    Ok(eps)
}
