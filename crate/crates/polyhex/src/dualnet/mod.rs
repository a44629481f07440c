//! Dual-latent conditional denoising architecture.
//!
//! Both networks are stacks of two-stream blocks. Each block lets a small,
//! fixed set of latent tokens read from the per-point data tokens by cross
//! attention, run H ordinary pre-norm transformer layers among themselves,
//! and write back to the data tokens by a second cross attention. Data
//! tokens never attend to each other, so self-attention cost is fixed by
//! the latent token count and total cost is linear in the point count.
//!
//! * The condition encoder turns a surface sample `[N,3]` into 64 latent
//!   tokens `z_c`.
//! * The denoiser predicts injected noise for a corrupted cloud `[M,6]`,
//!   with its latent stream initialized as `[z_c, learned tokens, time
//!   token]`.
//!
//! Forward wiring exists twice over shared kernels: a tape-recorded version
//! for training ([`blocks`]) and a streaming version for sampling
//! ([`infer`]); the two are bit-identical, which a test pins.

pub mod blocks;
pub mod embed;
pub mod infer;
pub mod train;

pub use infer::ForwardStats;
pub use train::{cosine_lr, training_loss, AdamW, LossMode, TrainConfig};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::diffusion::DiffusionError;
use crate::nn::tensor::Tensor;
use crate::nn::{NnError, ParameterStore};

/// Feed-forward hidden width as a multiple of `d_model`.
pub const FFN_MULT: usize = 4;
/// Checkpoint sidecar holding the two configs.
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, thiserror::Error)]
pub enum DualnetError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("data stream is empty")]
    EmptyData,
    #[error("condition cloud is empty")]
    EmptyCondition,
    #[error("width mismatch: expected {expected} channels, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("non-finite loss at optimizer step {step}: {loss}")]
    NonFiniteLoss { step: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// Condition encoder shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub blocks: usize,
    pub layers_per_block: usize,
    pub heads: usize,
    pub d_model: usize,
    pub latent_tokens: usize,
    pub input_channels: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            blocks: 6,
            layers_per_block: 6,
            heads: 8,
            d_model: 256,
            latent_tokens: 64,
            input_channels: 3,
        }
    }
}

/// Noise-prediction network shape. `latent_tokens` counts only the learned
/// tokens; at run time the latent stream also carries the 64 condition
/// tokens and one time token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserConfig {
    pub blocks: usize,
    pub layers_per_block: usize,
    pub heads: usize,
    pub d_model: usize,
    pub latent_tokens: usize,
    pub input_channels: usize,
    pub output_channels: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            blocks: 6,
            layers_per_block: 4,
            heads: 8,
            d_model: 256,
            latent_tokens: 256,
            input_channels: 6,
            output_channels: 6,
        }
    }
}

fn validate_common(
    who: &str,
    blocks: usize,
    layers: usize,
    heads: usize,
    d_model: usize,
    latent: usize,
    in_ch: usize,
) -> Result<(), DualnetError> {
    let fail = |msg: String| Err(DualnetError::BadConfig(format!("{who}: {msg}")));
    if blocks == 0 || layers == 0 || heads == 0 || d_model == 0 || latent == 0 || in_ch == 0 {
        return fail("all dimensions must be positive".into());
    }
    if d_model % heads != 0 {
        return fail(format!("d_model {d_model} not divisible by {heads} heads"));
    }
    if d_model % 2 != 0 {
        return fail(format!("d_model {d_model} must be even for the sinusoid"));
    }
    Ok(())
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), DualnetError> {
        validate_common(
            "encoder",
            self.blocks,
            self.layers_per_block,
            self.heads,
            self.d_model,
            self.latent_tokens,
            self.input_channels,
        )
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<(), DualnetError> {
        validate_common(
            "denoiser",
            self.blocks,
            self.layers_per_block,
            self.heads,
            self.d_model,
            self.latent_tokens,
            self.input_channels,
        )?;
        if self.output_channels == 0 {
            return Err(DualnetError::BadConfig(
                "denoiser: output_channels must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Latent tokens entering every self-attention layer at run time:
    /// condition tokens + learned tokens + the time token.
    pub fn runtime_latent_tokens(&self, condition_tokens: usize) -> usize {
        condition_tokens + self.latent_tokens + 1
    }
}

/// Per-block wiring knobs shared by encoder and denoiser.
#[derive(Debug, Clone, Copy)]
pub struct BlockConfig {
    pub heads: usize,
    pub layers: usize,
    /// Gain on the read-attention residual branch. Fixed at 1; kept as a
    /// field so the block contract names it explicitly.
    pub read_scale: f64,
    /// Gain on the write-attention residual branch, likewise fixed at 1;
    /// the write projection is zero-initialized, so blocks start as the
    /// identity on the data stream regardless of this value.
    pub write_scale: f64,
}

impl BlockConfig {
    pub fn new(heads: usize, layers: usize) -> Self {
        BlockConfig {
            heads,
            layers,
            read_scale: 1.0,
            write_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// normal(0, std); weight matrices use std = 1/sqrt(fan_in) so
    /// activations stay unit scale at depth.
    Normal(f64),
    Zero,
    One,
}

fn fan_in(rows: usize) -> Init {
    Init::Normal(1.0 / (rows as f64).sqrt())
}

/// Every parameter the two networks own: `(name, shape, init)`. The layout
/// is the single source of truth for initialization and checkpoint
/// validation.
fn parameter_layout(enc: &EncoderConfig, den: &DenoiserConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| out.push((name, shape, init));

    let featurizer = |p: &str, in_ch: usize, d: usize, push: &mut dyn FnMut(String, Vec<usize>, Init)| {
        push(format!("{p}.feat.w1"), vec![in_ch, d], fan_in(in_ch));
        push(format!("{p}.feat.b1"), vec![d], Init::Zero);
        push(format!("{p}.feat.w2"), vec![d, d], fan_in(d));
        push(format!("{p}.feat.b2"), vec![d], Init::Zero);
    };
    let layer_norm = |p: String, d: usize, push: &mut dyn FnMut(String, Vec<usize>, Init)| {
        push(format!("{p}.gain"), vec![d], Init::One);
        push(format!("{p}.bias"), vec![d], Init::Zero);
    };
    let attention = |p: String, d: usize, zero_out: bool, push: &mut dyn FnMut(String, Vec<usize>, Init)| {
        for w in ["wq", "wk", "wv"] {
            push(format!("{p}.{w}"), vec![d, d], fan_in(d));
        }
        push(
            format!("{p}.wo"),
            vec![d, d],
            if zero_out { Init::Zero } else { fan_in(d) },
        );
        for b in ["bq", "bk", "bv", "bo"] {
            push(format!("{p}.{b}"), vec![d], Init::Zero);
        }
    };
    let block = |p: String, d: usize, layers: usize, push: &mut dyn FnMut(String, Vec<usize>, Init)| {
        layer_norm(format!("{p}.read.ln_q"), d, push);
        layer_norm(format!("{p}.read.ln_kv"), d, push);
        attention(format!("{p}.read"), d, false, push);
        for j in 0..layers {
            layer_norm(format!("{p}.layer{j}.ln1"), d, push);
            attention(format!("{p}.layer{j}.attn"), d, false, push);
            layer_norm(format!("{p}.layer{j}.ln2"), d, push);
            push(format!("{p}.layer{j}.ffn.w1"), vec![d, FFN_MULT * d], fan_in(d));
            push(format!("{p}.layer{j}.ffn.b1"), vec![FFN_MULT * d], Init::Zero);
            push(format!("{p}.layer{j}.ffn.w2"), vec![FFN_MULT * d, d], fan_in(FFN_MULT * d));
            push(format!("{p}.layer{j}.ffn.b2"), vec![d], Init::Zero);
        }
        layer_norm(format!("{p}.write.ln_q"), d, push);
        layer_norm(format!("{p}.write.ln_kv"), d, push);
        attention(format!("{p}.write"), d, true, push);
    };

    let d = enc.d_model;
    featurizer("enc", enc.input_channels, d, &mut push);
    push("enc.z_init".into(), vec![enc.latent_tokens, d], Init::Normal(1.0));
    for i in 0..enc.blocks {
        block(format!("enc.block{i}"), d, enc.layers_per_block, &mut push);
    }

    let d = den.d_model;
    featurizer("den", den.input_channels, d, &mut push);
    push("den.z_init".into(), vec![den.latent_tokens, d], Init::Normal(1.0));
    push("den.time.w".into(), vec![d, d], fan_in(d));
    push("den.time.b".into(), vec![d], Init::Zero);
    for i in 0..den.blocks {
        block(format!("den.block{i}"), d, den.layers_per_block, &mut push);
    }
    layer_norm("den.head.ln".into(), d, &mut push);
    push("den.head.w".into(), vec![d, den.output_channels], Init::Zero);
    push("den.head.b".into(), vec![den.output_channels], Init::Zero);

    out
}

/// The conditioned denoising model: both configs plus one parameter store.
pub struct Model {
    pub encoder: EncoderConfig,
    pub denoiser: DenoiserConfig,
    pub params: ParameterStore,
}

impl Model {
    /// Fresh random initialization. Weight matrices are fan-in-scaled
    /// normals, biases zero, layer-norm gains one; the write projections and
    /// the output head are zero so every block starts as the identity and
    /// the initial noise prediction is exactly zero.
    pub fn init<R: Rng>(
        encoder: EncoderConfig,
        denoiser: DenoiserConfig,
        rng: &mut R,
    ) -> Result<Self, DualnetError> {
        encoder.validate()?;
        denoiser.validate()?;
        if encoder.d_model != denoiser.d_model {
            return Err(DualnetError::BadConfig(format!(
                "encoder d_model {} != denoiser d_model {}",
                encoder.d_model, denoiser.d_model
            )));
        }
        let mut params = ParameterStore::new();
        for (name, shape, init) in parameter_layout(&encoder, &denoiser) {
            match init {
                Init::Normal(std) => params.add_normal(&name, shape, std, rng)?,
                Init::Zero => params.add_zeros(&name, shape)?,
                Init::One => params.add_ones(&name, shape)?,
            }
        }
        Ok(Model {
            encoder,
            denoiser,
            params,
        })
    }

    /// Condition tokens `z_c` for a surface sample `[N, input_channels]`.
    pub fn encode_condition(&self, g: &Tensor) -> Result<Tensor, DualnetError> {
        infer::encode_condition_plain(&self.params, &self.encoder, g, None)
    }

    /// As [`Self::encode_condition`], also reporting per-layer token counts.
    pub fn encode_condition_traced(
        &self,
        g: &Tensor,
    ) -> Result<(Tensor, ForwardStats), DualnetError> {
        let mut stats = ForwardStats::default();
        let z = infer::encode_condition_plain(&self.params, &self.encoder, g, Some(&mut stats))?;
        Ok((z, stats))
    }

    /// Predicted noise for the corrupted cloud `x_t` at step `t`.
    pub fn denoise(&self, xt: &Tensor, z_c: &Tensor, t: usize) -> Result<Tensor, DualnetError> {
        infer::denoise_plain(&self.params, &self.denoiser, xt, z_c, t, None)
    }

    /// As [`Self::denoise`], also reporting per-layer token counts.
    pub fn denoise_traced(
        &self,
        xt: &Tensor,
        z_c: &Tensor,
        t: usize,
    ) -> Result<(Tensor, ForwardStats), DualnetError> {
        let mut stats = ForwardStats::default();
        let eps = infer::denoise_plain(&self.params, &self.denoiser, xt, z_c, t, Some(&mut stats))?;
        Ok((eps, stats))
    }

    /// Writes the parameter files plus `config.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), DualnetError> {
        self.params.save(dir)?;
        let mut cfg = String::new();
        for (k, v) in self.config_kv() {
            writeln!(cfg, "{k}={v}").expect("string write");
        }
        fs::write(dir.join(CONFIG_FILE), cfg).map_err(NnError::Io)?;
        Ok(())
    }

    /// Loads a checkpoint, validating that the stored tensors agree exactly
    /// with the layout the configs dictate.
    pub fn load(dir: &Path) -> Result<Self, DualnetError> {
        let text = fs::read_to_string(dir.join(CONFIG_FILE)).map_err(NnError::Io)?;
        let (encoder, denoiser) = parse_config(&text)?;
        encoder.validate()?;
        denoiser.validate()?;
        let params = ParameterStore::load(dir)?;

        let layout = parameter_layout(&encoder, &denoiser);
        if params.len() != layout.len() {
            return Err(DualnetError::Checkpoint(format!(
                "expected {} tensors, found {}",
                layout.len(),
                params.len()
            )));
        }
        for (name, shape, _) in &layout {
            let t = params
                .get(name)
                .map_err(|_| DualnetError::Checkpoint(format!("missing tensor {name:?}")))?;
            if t.shape() != shape.as_slice() {
                return Err(DualnetError::Checkpoint(format!(
                    "tensor {name:?} has shape {:?}, config requires {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Model {
            encoder,
            denoiser,
            params,
        })
    }

    fn config_kv(&self) -> Vec<(String, String)> {
        let e = &self.encoder;
        let d = &self.denoiser;
        vec![
            ("encoder.blocks".into(), e.blocks.to_string()),
            ("encoder.layers_per_block".into(), e.layers_per_block.to_string()),
            ("encoder.heads".into(), e.heads.to_string()),
            ("encoder.d_model".into(), e.d_model.to_string()),
            ("encoder.latent_tokens".into(), e.latent_tokens.to_string()),
            ("encoder.input_channels".into(), e.input_channels.to_string()),
            ("denoiser.blocks".into(), d.blocks.to_string()),
            ("denoiser.layers_per_block".into(), d.layers_per_block.to_string()),
            ("denoiser.heads".into(), d.heads.to_string()),
            ("denoiser.d_model".into(), d.d_model.to_string()),
            ("denoiser.latent_tokens".into(), d.latent_tokens.to_string()),
            ("denoiser.input_channels".into(), d.input_channels.to_string()),
            ("denoiser.output_channels".into(), d.output_channels.to_string()),
        ]
    }
}

fn parse_config(text: &str) -> Result<(EncoderConfig, DenoiserConfig), DualnetError> {
    let mut map: BTreeMap<&str, usize> = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| DualnetError::Checkpoint(format!("bad config line {line:?}")))?;
        let v: usize = v
            .trim()
            .parse()
            .map_err(|_| DualnetError::Checkpoint(format!("bad config value in {line:?}")))?;
        if map.insert(k.trim(), v).is_some() {
            return Err(DualnetError::Checkpoint(format!("duplicate config key {k:?}")));
        }
    }
    let mut take = |k: &str| {
        map.remove(k)
            .ok_or_else(|| DualnetError::Checkpoint(format!("missing config key {k:?}")))
    };
    let encoder = EncoderConfig {
        blocks: take("encoder.blocks")?,
        layers_per_block: take("encoder.layers_per_block")?,
        heads: take("encoder.heads")?,
        d_model: take("encoder.d_model")?,
        latent_tokens: take("encoder.latent_tokens")?,
        input_channels: take("encoder.input_channels")?,
    };
    let denoiser = DenoiserConfig {
        blocks: take("denoiser.blocks")?,
        layers_per_block: take("denoiser.layers_per_block")?,
        heads: take("denoiser.heads")?,
        d_model: take("denoiser.d_model")?,
        latent_tokens: take("denoiser.latent_tokens")?,
        input_channels: take("denoiser.input_channels")?,
        output_channels: take("denoiser.output_channels")?,
    };
    if let Some((k, _)) = map.into_iter().next() {
        return Err(DualnetError::Checkpoint(format!("unknown config key {k:?}")));
    }
    Ok((encoder, denoiser))
}

#[cfg(test)]
pub(crate) fn tiny_configs(d: usize) -> (EncoderConfig, DenoiserConfig) {
    (
        EncoderConfig {
            blocks: 2,
            layers_per_block: 2,
            heads: 2,
            d_model: d,
            latent_tokens: 4,
            input_channels: 3,
        },
        DenoiserConfig {
            blocks: 2,
            layers_per_block: 2,
            heads: 2,
            d_model: d,
            latent_tokens: 8,
            input_channels: 6,
            output_channels: 6,
        },
    )
}
