//! Dense row-major f64 tensors and the forward kernels shared by the tape
//! and the no-grad evaluation path.
//!
//! Tensors are immutable once created; every kernel allocates its output.
//! Shapes are `[rows, cols]` for matrices and `[n]` for vectors. Scalars are
//! `[1]`.

use super::NnError;

/// Layer-norm variance floor. Keeps the row denominator bounded away from
/// zero for constant rows.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// A dense row-major f64 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    /// Builds a tensor from raw data. The data length must match the shape.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NnError::BadShape {
                op: "from_vec",
                expected: "data length matching shape product",
                got: shape,
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Marks the tensor as trainable (or frozen). Consumed by the tape when
    /// the tensor becomes a leaf and by `finite_diff_check`, which skips
    /// frozen parameters.
    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    /// Number of rows when viewed as a matrix; vectors count as one row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    /// Number of columns when viewed as a matrix.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            1 => self.shape[0],
            _ => 0,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn expect_2d(&self, op: &'static str) -> Result<(usize, usize), NnError> {
        if self.shape.len() == 2 {
            Ok((self.shape[0], self.shape[1]))
        } else {
            Err(NnError::BadShape {
                op,
                expected: "2-d tensor",
                got: self.shape.clone(),
            })
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), NnError> {
    if a.shape == b.shape {
        Ok(())
    } else {
        Err(NnError::ShapeMismatch {
            op,
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        })
    }
}

// ── Matrix products ─────────────────────────────────────────────────────

/// `a [m,k] @ b [k,n] -> [m,n]`. The k-outer / j-inner loop keeps both the
/// `b` row and the output row contiguous, which is what lets the compiler
/// vectorize this; the sweeps and training budgets depend on it.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (m, ka) = a.expect_2d("matmul")?;
    let (kb, n) = b.expect_2d("matmul")?;
    if ka != kb {
        return Err(NnError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * ka..(i + 1) * ka];
        let orow = &mut out[i * n..(i + 1) * n];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = &b.data[k * n..(k + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
        requires_grad: false,
    })
}

/// `a [m,k] @ b^T [k,n] -> [m,n]` where `b` is stored as `[n,k]`.
/// Row-by-row dot products; both operands are read contiguously.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (m, ka) = a.expect_2d("matmul_nt")?;
    let (n, kb) = b.expect_2d("matmul_nt")?;
    if ka != kb {
        return Err(NnError::ShapeMismatch {
            op: "matmul_nt",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * ka..(i + 1) * ka];
        let orow = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b.data[j * kb..(j + 1) * kb];
            let mut s = 0.0;
            for k in 0..ka {
                s += arow[k] * brow[k];
            }
            orow[j] = s;
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
        requires_grad: false,
    })
}

/// `a^T [k,m] @ b [k,n] -> [m,n]` where `a` is stored as `[k,m]`.
/// Used by matmul backward (`dB = A^T dC`).
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (ka, m) = a.expect_2d("matmul_tn")?;
    let (kb, n) = b.expect_2d("matmul_tn")?;
    if ka != kb {
        return Err(NnError::ShapeMismatch {
            op: "matmul_tn",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    for k in 0..ka {
        let arow = &a.data[k * m..(k + 1) * m];
        let brow = &b.data[k * n..(k + 1) * n];
        for (i, &aki) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aki * brow[j];
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
        requires_grad: false,
    })
}

// ── Elementwise ─────────────────────────────────────────────────────────

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    same_shape("add", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
        requires_grad: false,
    })
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    same_shape("sub", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
        requires_grad: false,
    })
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    same_shape("mul", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
        requires_grad: false,
    })
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|x| x * c).collect(),
        requires_grad: false,
    }
}

pub fn abs(a: &Tensor) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|x| x.abs()).collect(),
        requires_grad: false,
    }
}

/// Adds a `[d]` bias vector to every row of `x [n,d]`.
pub fn add_row(x: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (n, d) = x.expect_2d("add_row")?;
    if b.shape != [d] {
        return Err(NnError::ShapeMismatch {
            op: "add_row",
            lhs: x.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let mut data = x.data.clone();
    for i in 0..n {
        for j in 0..d {
            data[i * d + j] += b.data[j];
        }
    }
    Ok(Tensor {
        shape: x.shape.clone(),
        data,
        requires_grad: false,
    })
}

// ── Activations ─────────────────────────────────────────────────────────

/// GELU, tanh approximation: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
pub fn gelu_scalar(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

/// Derivative of the tanh-approximation GELU.
pub fn gelu_grad_scalar(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let sech2 = 1.0 - t * t;
    let d_inner = C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner
}

pub fn gelu(a: &Tensor) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&x| gelu_scalar(x)).collect(),
        requires_grad: false,
    }
}

// ── Softmax and layer norm ──────────────────────────────────────────────

/// Row-wise softmax of a `[n,d]` matrix, max-shifted for stability.
pub fn softmax_rows(a: &Tensor) -> Result<Tensor, NnError> {
    let (n, d) = a.expect_2d("softmax_rows")?;
    let mut data = vec![0.0; n * d];
    for i in 0..n {
        softmax_row(&a.data[i * d..(i + 1) * d], &mut data[i * d..(i + 1) * d]);
    }
    Ok(Tensor {
        shape: vec![n, d],
        data,
        requires_grad: false,
    })
}

/// Softmax of one row into `out`. Shared by the attention kernels so the
/// streaming and taped paths produce identical floats.
pub fn softmax_row(row: &[f64], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &v in row {
        if v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row-wise layer norm with learned gain and bias:
/// `y = (x - mean) / sqrt(var + eps) * gain + bias`, statistics per row.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (n, d) = x.expect_2d("layer_norm")?;
    if gain.shape != [d] || bias.shape != [d] {
        return Err(NnError::ShapeMismatch {
            op: "layer_norm",
            lhs: x.shape.clone(),
            rhs: gain.shape.clone(),
        });
    }
    let mut data = vec![0.0; n * d];
    for i in 0..n {
        let row = &x.data[i * d..(i + 1) * d];
        let (mean, inv_std) = row_stats(row);
        let out = &mut data[i * d..(i + 1) * d];
        for j in 0..d {
            out[j] = (row[j] - mean) * inv_std * gain.data[j] + bias.data[j];
        }
    }
    Ok(Tensor {
        shape: vec![n, d],
        data,
        requires_grad: false,
    })
}

/// Mean and `1/sqrt(var + eps)` of a row, population variance.
pub fn row_stats(row: &[f64]) -> (f64, f64) {
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

// ── Concat / slice ──────────────────────────────────────────────────────

/// Stacks matrices with equal column counts along the row axis.
pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor, NnError> {
    if parts.is_empty() {
        return Err(NnError::BadShape {
            op: "concat_rows",
            expected: "at least one part",
            got: vec![],
        });
    }
    let (_, d) = parts[0].expect_2d("concat_rows")?;
    let mut rows = 0;
    for p in parts {
        let (r, c) = p.expect_2d("concat_rows")?;
        if c != d {
            return Err(NnError::ShapeMismatch {
                op: "concat_rows",
                lhs: parts[0].shape.clone(),
                rhs: p.shape.clone(),
            });
        }
        rows += r;
    }
    let mut data = Vec::with_capacity(rows * d);
    for p in parts {
        data.extend_from_slice(&p.data);
    }
    Ok(Tensor {
        shape: vec![rows, d],
        data,
        requires_grad: false,
    })
}

/// Rows `[start, start+len)` of a matrix.
pub fn slice_rows(x: &Tensor, start: usize, len: usize) -> Result<Tensor, NnError> {
    let (n, d) = x.expect_2d("slice_rows")?;
    if start + len > n {
        return Err(NnError::BadShape {
            op: "slice_rows",
            expected: "slice within row count",
            got: vec![start, len, n],
        });
    }
    Ok(Tensor {
        shape: vec![len, d],
        data: x.data[start * d..(start + len) * d].to_vec(),
        requires_grad: false,
    })
}

/// Concatenates matrices with equal row counts along the column axis.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, NnError> {
    if parts.is_empty() {
        return Err(NnError::BadShape {
            op: "concat_cols",
            expected: "at least one part",
            got: vec![],
        });
    }
    let (n, _) = parts[0].expect_2d("concat_cols")?;
    let mut cols = 0;
    for p in parts {
        let (r, c) = p.expect_2d("concat_cols")?;
        if r != n {
            return Err(NnError::ShapeMismatch {
                op: "concat_cols",
                lhs: parts[0].shape.clone(),
                rhs: p.shape.clone(),
            });
        }
        cols += c;
    }
    let mut data = vec![0.0; n * cols];
    let mut offset = 0;
    for p in parts {
        let c = p.shape[1];
        for i in 0..n {
            data[i * cols + offset..i * cols + offset + c]
                .copy_from_slice(&p.data[i * c..(i + 1) * c]);
        }
        offset += c;
    }
    Ok(Tensor {
        shape: vec![n, cols],
        data,
        requires_grad: false,
    })
}

/// Columns `[start, start+len)` of a matrix.
pub fn slice_cols(x: &Tensor, start: usize, len: usize) -> Result<Tensor, NnError> {
    let (n, d) = x.expect_2d("slice_cols")?;
    if start + len > d {
        return Err(NnError::BadShape {
            op: "slice_cols",
            expected: "slice within column count",
            got: vec![start, len, d],
        });
    }
    let mut data = Vec::with_capacity(n * len);
    for i in 0..n {
        data.extend_from_slice(&x.data[i * d + start..i * d + start + len]);
    }
    Ok(Tensor {
        shape: vec![n, len],
        data,
        requires_grad: false,
    })
}

// ── Reductions ──────────────────────────────────────────────────────────

pub fn sum_all(a: &Tensor) -> f64 {
    a.data.iter().sum()
}

pub fn mean_all(a: &Tensor) -> f64 {
    sum_all(a) / a.data.len() as f64
}
