//! Named parameter collection with a small on-disk checkpoint format.
//!
//! Parameters live in a `BTreeMap`, so iteration order (and therefore
//! optimizer traversal and file layout) is the parameter name order,
//! independent of insertion order.
//!
//! A checkpoint is a directory holding two files written by `save`:
//!
//! - `params.bin`: every tensor's values as little-endian f32, concatenated
//!   in name order. f32 matches how checkpoints of this size are usually
//!   shipped; training still runs in f64.
//! - `manifest.txt`: `params <count>` followed by one `<name> <shape> <byte
//!   offset>` line per tensor, shape as `x`-joined dims (`256x256`, `64`).
//!
//! Model-level configuration is not stored here; callers write their own
//! sidecar next to these files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use super::tensor::Tensor;
use super::NnError;

pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Named trainable tensors.
#[derive(Default, Clone)]
pub struct ParameterStore {
    params: BTreeMap<String, Tensor>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tensor under a unique, whitespace-free name.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<(), NnError> {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(NnError::Params(format!(
                "invalid parameter name {name:?}: must be non-empty without whitespace"
            )));
        }
        if self.params.contains_key(name) {
            return Err(NnError::Params(format!("duplicate parameter {name:?}")));
        }
        self.params.insert(name.to_string(), tensor);
        Ok(())
    }

    /// New parameter with i.i.d. normal(0, std^2) entries.
    pub fn add_normal<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        std: f64,
        rng: &mut R,
    ) -> Result<(), NnError> {
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let t = Tensor::from_vec(shape, data)?.with_requires_grad(true);
        self.insert(name, t)
    }

    /// New all-zero parameter (biases, zero-initialized projections).
    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<(), NnError> {
        let t = Tensor::zeros(shape).with_requires_grad(true);
        self.insert(name, t)
    }

    /// New all-one parameter (layer-norm gains).
    pub fn add_ones(&mut self, name: &str, shape: Vec<usize>) -> Result<(), NnError> {
        let numel: usize = shape.iter().product();
        let t = Tensor::from_vec(shape, vec![1.0; numel])?.with_requires_grad(true);
        self.insert(name, t)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NnError> {
        self.params
            .get(name)
            .ok_or_else(|| NnError::Params(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NnError> {
        self.params
            .get_mut(name)
            .ok_or_else(|| NnError::Params(format!("unknown parameter {name:?}")))
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Name-ordered iteration; this order defines the checkpoint layout.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    /// Writes `params.bin` and `manifest.txt` into `dir` (created if absent).
    pub fn save(&self, dir: &Path) -> Result<(), NnError> {
        fs::create_dir_all(dir)?;
        let mut bin: Vec<u8> = Vec::with_capacity(self.num_values() * 4);
        let mut manifest = format!("params {}\n", self.params.len());
        for (name, t) in &self.params {
            let shape = t
                .shape()
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join("x");
            manifest.push_str(&format!("{name} {shape} {}\n", bin.len()));
            for &v in t.data() {
                bin.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        fs::write(dir.join(PARAMS_FILE), bin)?;
        fs::write(dir.join(MANIFEST_FILE), manifest)?;
        Ok(())
    }

    /// Reads a checkpoint written by `save`. Loaded tensors are trainable.
    pub fn load(dir: &Path) -> Result<Self, NnError> {
        let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let bin = fs::read(dir.join(PARAMS_FILE))?;
        let mut lines = manifest.lines();
        let header = lines
            .next()
            .ok_or_else(|| NnError::Params("empty manifest".into()))?;
        let count: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["params", n] => n
                .parse()
                .map_err(|_| NnError::Params(format!("bad manifest header {header:?}")))?,
            _ => return Err(NnError::Params(format!("bad manifest header {header:?}"))),
        };

        let mut store = ParameterStore::new();
        let mut expected_offset = 0usize;
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| NnError::Params("manifest truncated".into()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, shape_str, offset_str] = fields[..] else {
                return Err(NnError::Params(format!("bad manifest line {line:?}")));
            };
            let shape: Vec<usize> = shape_str
                .split('x')
                .map(|s| {
                    s.parse()
                        .map_err(|_| NnError::Params(format!("bad shape {shape_str:?}")))
                })
                .collect::<Result<_, _>>()?;
            let offset: usize = offset_str
                .parse()
                .map_err(|_| NnError::Params(format!("bad offset {offset_str:?}")))?;
            if offset != expected_offset {
                return Err(NnError::Params(format!(
                    "offset of {name:?} is {offset}, expected {expected_offset}"
                )));
            }
            let numel: usize = shape.iter().product();
            let end = offset + numel * 4;
            if end > bin.len() {
                return Err(NnError::Params(format!(
                    "{name:?} extends past end of {PARAMS_FILE} ({end} > {})",
                    bin.len()
                )));
            }
            let data: Vec<f64> = bin[offset..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            let t = Tensor::from_vec(shape, data)?.with_requires_grad(true);
            store.insert(name, t)?;
            expected_offset = end;
        }
        if expected_offset != bin.len() {
            return Err(NnError::Params(format!(
                "{PARAMS_FILE} has {} trailing bytes",
                bin.len() - expected_offset
            )));
        }
        Ok(store)
    }
}
