//! Reverse-mode autodiff over a flat operation tape.
//!
//! A [`TensorTape`] owns every intermediate tensor of one forward pass; ops
//! append a node and return its index. [`TensorTape::backward`] walks the
//! tape once in reverse and accumulates gradients for every node reachable
//! from a `requires_grad` leaf. Tapes are cheap to build and are discarded
//! after each training step; nothing is shared between steps.
//!
//! The op set is closed: everything the models need (attention, layer norm,
//! GELU feed-forward, residual wiring, the hybrid loss) is expressed in
//! these primitives, so a gradient check of the primitives covers the
//! composites.

use super::tensor::{self, Tensor};
use super::NnError;

/// One recorded operation; indices refer to earlier tape nodes.
#[derive(Debug, Clone)]
enum TapeOp {
    Leaf,
    Matmul { a: usize, b: usize },
    MatmulNT { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    AddRow { x: usize, b: usize },
    Gelu { a: usize },
    Abs { a: usize },
    SoftmaxRows { a: usize },
    LayerNorm { x: usize, gain: usize, bias: usize },
    ConcatRows { parts: Vec<usize> },
    SliceRows { x: usize, start: usize },
    ConcatCols { parts: Vec<usize> },
    SliceCols { x: usize, start: usize },
    MeanAll { a: usize },
    SumAll { a: usize },
}

struct Node {
    value: Tensor,
    op: TapeOp,
    requires_grad: bool,
}

/// Gradient tape for one forward/backward pass.
#[derive(Default)]
pub struct TensorTape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl TensorTape {
    pub fn new() -> Self {
        TensorTape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor. Gradients flow into it only if the tensor
    /// was marked `requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> usize {
        let rg = t.requires_grad();
        self.push(t, TapeOp::Leaf, rg)
    }

    pub fn value(&self, id: usize) -> &Tensor {
        &self.nodes[id].value
    }

    /// Gradient of the last `backward` root w.r.t. node `id`, if it was
    /// reachable and required grad.
    pub fn grad(&self, id: usize) -> Option<&[f64]> {
        self.grads[id].as_deref()
    }

    fn push(&mut self, value: Tensor, op: TapeOp, requires_grad: bool) -> usize {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        self.nodes.len() - 1
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    // ── Recorded ops ────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: usize, b: usize) -> Result<usize, NnError> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, TapeOp::Matmul { a, b }, rg))
    }

    /// `a @ b^T` with `b` stored row-major as `[n,k]`.
    pub fn matmul_nt(&mut self, a: usize, b: usize) -> Result<usize, NnError> {
        let v = tensor::matmul_nt(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, TapeOp::MatmulNT { a, b }, rg))
    }

    pub fn add(&mut self, a: usize, b: usize) -> Result<usize, NnError> {
        let v = tensor::add(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, TapeOp::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: usize, b: usize) -> Result<usize, NnError> {
        let v = tensor::sub(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, TapeOp::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, a: usize, b: usize) -> Result<usize, NnError> {
        let v = tensor::mul(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, TapeOp::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, a: usize, c: f64) -> usize {
        let v = tensor::scale(self.value(a), c);
        let rg = self.rg(&[a]);
        self.push(v, TapeOp::Scale { a, c }, rg)
    }

    /// Broadcast-adds a `[d]` bias to every row of `x [n,d]`.
    pub fn add_row(&mut self, x: usize, b: usize) -> Result<usize, NnError> {
        let v = tensor::add_row(self.value(x), self.value(b))?;
        let rg = self.rg(&[x, b]);
        Ok(self.push(v, TapeOp::AddRow { x, b }, rg))
    }

    pub fn gelu(&mut self, a: usize) -> usize {
        let v = tensor::gelu(self.value(a));
        let rg = self.rg(&[a]);
        self.push(v, TapeOp::Gelu { a }, rg)
    }

    pub fn abs(&mut self, a: usize) -> usize {
        let v = tensor::abs(self.value(a));
        let rg = self.rg(&[a]);
        self.push(v, TapeOp::Abs { a }, rg)
    }

    pub fn softmax_rows(&mut self, a: usize) -> Result<usize, NnError> {
        let v = tensor::softmax_rows(self.value(a))?;
        let rg = self.rg(&[a]);
        Ok(self.push(v, TapeOp::SoftmaxRows { a }, rg))
    }

    pub fn layer_norm(&mut self, x: usize, gain: usize, bias: usize) -> Result<usize, NnError> {
        let v = tensor::layer_norm(self.value(x), self.value(gain), self.value(bias))?;
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(v, TapeOp::LayerNorm { x, gain, bias }, rg))
    }

    pub fn concat_rows(&mut self, parts: &[usize]) -> Result<usize, NnError> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&i| self.value(i)).collect();
        let v = tensor::concat_rows(&tensors)?;
        let rg = self.rg(parts);
        Ok(self.push(v, TapeOp::ConcatRows { parts: parts.to_vec() }, rg))
    }

    pub fn slice_rows(&mut self, x: usize, start: usize, len: usize) -> Result<usize, NnError> {
        let v = tensor::slice_rows(self.value(x), start, len)?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, TapeOp::SliceRows { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[usize]) -> Result<usize, NnError> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&i| self.value(i)).collect();
        let v = tensor::concat_cols(&tensors)?;
        let rg = self.rg(parts);
        Ok(self.push(v, TapeOp::ConcatCols { parts: parts.to_vec() }, rg))
    }

    pub fn slice_cols(&mut self, x: usize, start: usize, len: usize) -> Result<usize, NnError> {
        let v = tensor::slice_cols(self.value(x), start, len)?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, TapeOp::SliceCols { x, start }, rg))
    }

    pub fn mean_all(&mut self, a: usize) -> usize {
        let v = Tensor::scalar(tensor::mean_all(self.value(a)));
        let rg = self.rg(&[a]);
        self.push(v, TapeOp::MeanAll { a }, rg)
    }

    pub fn sum_all(&mut self, a: usize) -> usize {
        let v = Tensor::scalar(tensor::sum_all(self.value(a)));
        let rg = self.rg(&[a]);
        self.push(v, TapeOp::SumAll { a }, rg)
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Accumulates `d root / d node` for every node with `requires_grad`.
    /// `root` must be a scalar (shape `[1]`).
    pub fn backward(&mut self, root: usize) -> Result<(), NnError> {
        if self.nodes[root].value.numel() != 1 {
            return Err(NnError::BadShape {
                op: "backward",
                expected: "scalar root",
                got: self.nodes[root].value.shape().to_vec(),
            });
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[root] = Some(vec![1.0]);

        for id in (0..=root).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g_out) = self.grads[id].take() else {
                continue;
            };
            self.step_backward(id, &g_out)?;
            self.grads[id] = Some(g_out);
        }
        Ok(())
    }

    fn add_grad(&mut self, id: usize, delta: &[f64]) {
        if !self.nodes[id].requires_grad {
            return;
        }
        let g = self.grads[id].get_or_insert_with(|| vec![0.0; self.nodes[id].value.numel()]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    fn step_backward(&mut self, id: usize, g_out: &[f64]) -> Result<(), NnError> {
        let op = self.nodes[id].op.clone();
        match op {
            TapeOp::Leaf => {}

            TapeOp::Matmul { a, b } => {
                // C = A B: dA = dC B^T, dB = A^T dC.
                let (m, n) = (self.value(a).rows(), self.value(b).cols());
                let dc = Tensor::from_vec(vec![m, n], g_out.to_vec())?;
                if self.nodes[a].requires_grad {
                    let da = tensor::matmul_nt(&dc, self.value(b))?;
                    self.add_grad(a, da.data());
                }
                if self.nodes[b].requires_grad {
                    let db = tensor::matmul_tn(self.value(a), &dc)?;
                    self.add_grad(b, db.data());
                }
            }

            TapeOp::MatmulNT { a, b } => {
                // C = A B^T: dA = dC B, dB = dC^T A.
                let (m, n) = (self.value(a).rows(), self.value(b).rows());
                let dc = Tensor::from_vec(vec![m, n], g_out.to_vec())?;
                if self.nodes[a].requires_grad {
                    let da = tensor::matmul(&dc, self.value(b))?;
                    self.add_grad(a, da.data());
                }
                if self.nodes[b].requires_grad {
                    let db = tensor::matmul_tn(&dc, self.value(a))?;
                    self.add_grad(b, db.data());
                }
            }

            TapeOp::Add { a, b } => {
                self.add_grad(a, g_out);
                self.add_grad(b, g_out);
            }

            TapeOp::Sub { a, b } => {
                self.add_grad(a, g_out);
                let neg: Vec<f64> = g_out.iter().map(|v| -v).collect();
                self.add_grad(b, &neg);
            }

            TapeOp::Mul { a, b } => {
                if self.nodes[a].requires_grad {
                    let da: Vec<f64> = g_out
                        .iter()
                        .zip(self.value(b).data())
                        .map(|(g, y)| g * y)
                        .collect();
                    self.add_grad(a, &da);
                }
                if self.nodes[b].requires_grad {
                    let db: Vec<f64> = g_out
                        .iter()
                        .zip(self.value(a).data())
                        .map(|(g, x)| g * x)
                        .collect();
                    self.add_grad(b, &db);
                }
            }

            TapeOp::Scale { a, c } => {
                let da: Vec<f64> = g_out.iter().map(|g| g * c).collect();
                self.add_grad(a, &da);
            }

            TapeOp::AddRow { x, b } => {
                self.add_grad(x, g_out);
                if self.nodes[b].requires_grad {
                    let d = self.value(b).numel();
                    let n = g_out.len() / d;
                    let mut db = vec![0.0; d];
                    for i in 0..n {
                        for j in 0..d {
                            db[j] += g_out[i * d + j];
                        }
                    }
                    self.add_grad(b, &db);
                }
            }

            TapeOp::Gelu { a } => {
                let da: Vec<f64> = g_out
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(g, &x)| g * tensor::gelu_grad_scalar(x))
                    .collect();
                self.add_grad(a, &da);
            }

            TapeOp::Abs { a } => {
                let da: Vec<f64> = g_out
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(g, &x)| {
                        if x > 0.0 {
                            *g
                        } else if x < 0.0 {
                            -*g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.add_grad(a, &da);
            }

            TapeOp::SoftmaxRows { a } => {
                // y = softmax(x) per row: dx_j = y_j (g_j - sum_k g_k y_k).
                let y = &self.nodes[id].value;
                let d = y.cols();
                let n = y.rows();
                let mut da = vec![0.0; n * d];
                for i in 0..n {
                    let yr = y.row(i);
                    let gr = &g_out[i * d..(i + 1) * d];
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for j in 0..d {
                        da[i * d + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.add_grad(a, &da);
            }

            TapeOp::LayerNorm { x, gain, bias } => {
                let xt = self.value(x);
                let (n, d) = (xt.rows(), xt.cols());
                let gaint = self.value(gain).data().to_vec();
                let mut dx = vec![0.0; n * d];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for i in 0..n {
                    let row = xt.row(i);
                    let (mean, inv_std) = tensor::row_stats(row);
                    let gr = &g_out[i * d..(i + 1) * d];
                    // xhat and the two row means needed by the input grad.
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    let mut xhat = vec![0.0; d];
                    for j in 0..d {
                        xhat[j] = (row[j] - mean) * inv_std;
                        let dxh = gr[j] * gaint[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xhat[j];
                        dgain[j] += gr[j] * xhat[j];
                        dbias[j] += gr[j];
                    }
                    let m1 = sum_dxh / d as f64;
                    let m2 = sum_dxh_xh / d as f64;
                    for j in 0..d {
                        let dxh = gr[j] * gaint[j];
                        dx[i * d + j] = inv_std * (dxh - m1 - xhat[j] * m2);
                    }
                }
                self.add_grad(x, &dx);
                self.add_grad(gain, &dgain);
                self.add_grad(bias, &dbias);
            }

            TapeOp::ConcatRows { parts } => {
                let mut offset = 0;
                for p in parts {
                    let numel = self.value(p).numel();
                    let slice = g_out[offset..offset + numel].to_vec();
                    self.add_grad(p, &slice);
                    offset += numel;
                }
            }

            TapeOp::SliceRows { x, start } => {
                if self.nodes[x].requires_grad {
                    let d = self.value(x).cols();
                    let mut dx = vec![0.0; self.value(x).numel()];
                    dx[start * d..start * d + g_out.len()].copy_from_slice(g_out);
                    self.add_grad(x, &dx);
                }
            }

            TapeOp::ConcatCols { parts } => {
                let n = self.nodes[id].value.rows();
                let total = self.nodes[id].value.cols();
                let mut offset = 0;
                for p in parts {
                    let c = self.value(p).cols();
                    if self.nodes[p].requires_grad {
                        let mut dp = vec![0.0; n * c];
                        for i in 0..n {
                            dp[i * c..(i + 1) * c]
                                .copy_from_slice(&g_out[i * total + offset..i * total + offset + c]);
                        }
                        self.add_grad(p, &dp);
                    }
                    offset += c;
                }
            }

            TapeOp::SliceCols { x, start } => {
                if self.nodes[x].requires_grad {
                    let xt = self.value(x);
                    let (n, d) = (xt.rows(), xt.cols());
                    let len = g_out.len() / n;
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        dx[i * d + start..i * d + start + len]
                            .copy_from_slice(&g_out[i * len..(i + 1) * len]);
                    }
                    self.add_grad(x, &dx);
                }
            }

            TapeOp::MeanAll { a } => {
                let numel = self.value(a).numel();
                let da = vec![g_out[0] / numel as f64; numel];
                self.add_grad(a, &da);
            }

            TapeOp::SumAll { a } => {
                let da = vec![g_out[0]; self.value(a).numel()];
                self.add_grad(a, &da);
            }
        }
        Ok(())
    }
}
