//! Multi-head attention, in the two execution styles the crate needs.
//!
//! `taped` records every intermediate on a [`TensorTape`] so gradients flow
//! to the projection weights; it is the training path and retains
//! O(n_q * n_k) score matrices, which is fine at training sizes.
//!
//! `plain` evaluates the same arithmetic without a tape, chunking query rows
//! so the live score buffer stays near [`SCORE_BUDGET`] floats regardless of
//! sequence length. Both paths share the scalar kernels and apply them in
//! the same order, so their outputs are bit-identical; a test pins that.

use super::tape::TensorTape;
use super::tensor::{self, Tensor};
use super::NnError;

/// Ceiling on live softmax-score floats in the streaming path. 4e6 f64s is
/// ~32 MB, small against the workspace memory budget while keeping chunks
/// large enough that projection overhead stays negligible.
pub const SCORE_BUDGET: usize = 4_000_000;

/// Projection weights by reference. All matrices are `[d,d]`, biases `[d]`.
#[derive(Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub wq: &'a Tensor,
    pub bq: &'a Tensor,
    pub wk: &'a Tensor,
    pub bk: &'a Tensor,
    pub wv: &'a Tensor,
    pub bv: &'a Tensor,
    pub wo: &'a Tensor,
    pub bo: &'a Tensor,
}

/// Projection weights as tape node ids, for the recorded path.
#[derive(Clone, Copy)]
pub struct AttentionWeightIds {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

/// Per-head width; errors unless `heads` divides `dim`.
pub fn head_dim(dim: usize, heads: usize) -> Result<usize, NnError> {
    if heads == 0 || dim % heads != 0 {
        Err(NnError::HeadsMismatch { dim, heads })
    } else {
        Ok(dim / heads)
    }
}

fn check_inputs(q_in: &Tensor, kv_in: &Tensor, heads: usize) -> Result<(usize, usize), NnError> {
    if q_in.shape().len() != 2 || kv_in.shape().len() != 2 {
        return Err(NnError::BadShape {
            op: "attention",
            expected: "2-d query and key/value inputs",
            got: q_in.shape().to_vec(),
        });
    }
    let d = q_in.cols();
    if kv_in.cols() != d {
        return Err(NnError::ShapeMismatch {
            op: "attention",
            lhs: q_in.shape().to_vec(),
            rhs: kv_in.shape().to_vec(),
        });
    }
    if kv_in.rows() == 0 {
        return Err(NnError::EmptyKeys);
    }
    let hd = head_dim(d, heads)?;
    Ok((d, hd))
}

/// Streaming multi-head attention: `softmax(QK^T / sqrt(hd)) V` per head,
/// heads concatenated, then the output projection.
pub fn multi_head_attention_plain(
    q_in: &Tensor,
    kv_in: &Tensor,
    w: &AttentionWeights,
    heads: usize,
) -> Result<Tensor, NnError> {
    let (d, hd) = check_inputs(q_in, kv_in, heads)?;
    let nq = q_in.rows();
    let nk = kv_in.rows();
    let sc = 1.0 / (hd as f64).sqrt();

    // Full-width key/value projections, then per-head column slices. The
    // full matrices are dropped before the chunk loop starts.
    let (kh_all, vh_all) = {
        let k = tensor::add_row(&tensor::matmul(kv_in, w.wk)?, w.bk)?;
        let v = tensor::add_row(&tensor::matmul(kv_in, w.wv)?, w.bv)?;
        let mut ks = Vec::with_capacity(heads);
        let mut vs = Vec::with_capacity(heads);
        for h in 0..heads {
            ks.push(tensor::slice_cols(&k, h * hd, hd)?);
            vs.push(tensor::slice_cols(&v, h * hd, hd)?);
        }
        (ks, vs)
    };

    let chunk = (SCORE_BUDGET / nk).max(1);
    let mut concat = Tensor::zeros(vec![nq, d]);
    let mut start = 0;
    while start < nq {
        let len = chunk.min(nq - start);
        let q_rows = tensor::slice_rows(q_in, start, len)?;
        let qc = tensor::add_row(&tensor::matmul(&q_rows, w.wq)?, w.bq)?;
        for h in 0..heads {
            let qh = tensor::slice_cols(&qc, h * hd, hd)?;
            let mut scores = tensor::scale(&tensor::matmul_nt(&qh, &kh_all[h])?, sc);
            for i in 0..len {
                let row = &mut scores.data_mut()[i * nk..(i + 1) * nk];
                let copy = row.to_vec();
                tensor::softmax_row(&copy, row);
            }
            let oh = tensor::matmul(&scores, &vh_all[h])?;
            for i in 0..len {
                let dst = (start + i) * d + h * hd;
                concat.data_mut()[dst..dst + hd].copy_from_slice(oh.row(i));
            }
        }
        start += len;
    }

    tensor::add_row(&tensor::matmul(&concat, w.wo)?, w.bo)
}

/// Tape-recorded multi-head attention; same arithmetic as the plain path.
pub fn multi_head_attention_taped(
    tape: &mut TensorTape,
    q_in: usize,
    kv_in: usize,
    w: &AttentionWeightIds,
    heads: usize,
) -> Result<usize, NnError> {
    let (d, hd) = check_inputs(tape.value(q_in), tape.value(kv_in), heads)?;
    let _ = d;
    let sc = 1.0 / (hd as f64).sqrt();

    let qm = tape.matmul(q_in, w.wq)?;
    let q = tape.add_row(qm, w.bq)?;
    let km = tape.matmul(kv_in, w.wk)?;
    let k = tape.add_row(km, w.bk)?;
    let vm = tape.matmul(kv_in, w.wv)?;
    let v = tape.add_row(vm, w.bv)?;

    let mut head_outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * hd, hd)?;
        let kh = tape.slice_cols(k, h * hd, hd)?;
        let vh = tape.slice_cols(v, h * hd, hd)?;
        let s = tape.matmul_nt(qh, kh)?;
        let ss = tape.scale(s, sc);
        let p = tape.softmax_rows(ss)?;
        head_outs.push(tape.matmul(p, vh)?);
    }
    let concat = tape.concat_cols(&head_outs)?;
    let om = tape.matmul(concat, w.wo)?;
    tape.add_row(om, w.bo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn eye(d: usize) -> Tensor {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        t(&[d, d], &data)
    }

    /// Deterministic pseudo-random fill, enough to decorrelate entries.
    fn fill(shape: &[usize], seed: u64) -> Tensor {
        let n: usize = shape.iter().product();
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
        let data: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        t(shape, &data)
    }

    /// Single head, head width 2, identity projections. Query [1,0] against
    /// keys [1,0] and [0,0] gives scores [1/sqrt(2), 0], so the first weight
    /// is exactly sigma = e^(1/sqrt 2) / (e^(1/sqrt 2) + 1) and the output
    /// is [sigma, 1 - sigma] against values [1,0], [0,1].
    #[test]
    fn two_key_attention_closed_form() {
        let q_in = t(&[1, 2], &[1.0, 0.0]);
        let kv_in = eye(2);
        let wk = t(&[2, 2], &[1.0, 0.0, 0.0, 0.0]);
        let zero2 = t(&[2], &[0.0, 0.0]);
        let id = eye(2);
        let w = AttentionWeights {
            wq: &id,
            bq: &zero2,
            wk: &wk,
            bk: &zero2,
            wv: &id,
            bv: &zero2,
            wo: &id,
            bo: &zero2,
        };
        let out = multi_head_attention_plain(&q_in, &kv_in, &w, 1).unwrap();

        let e = (1.0 / 2f64.sqrt()).exp();
        let sigma = e / (e + 1.0);
        assert!((out.data()[0] - sigma).abs() < 1e-12);
        assert!((out.data()[1] - (1.0 - sigma)).abs() < 1e-12);
    }

    #[test]
    fn plain_and_taped_paths_are_bit_identical() {
        let d = 8;
        let heads = 2;
        let q_in = fill(&[5, d], 1);
        let kv_in = fill(&[7, d], 2);
        let mats: Vec<Tensor> = (0..4).map(|i| fill(&[d, d], 10 + i)).collect();
        let biases: Vec<Tensor> = (0..4).map(|i| fill(&[d], 20 + i)).collect();

        let w = AttentionWeights {
            wq: &mats[0],
            bq: &biases[0],
            wk: &mats[1],
            bk: &biases[1],
            wv: &mats[2],
            bv: &biases[2],
            wo: &mats[3],
            bo: &biases[3],
        };
        let plain = multi_head_attention_plain(&q_in, &kv_in, &w, heads).unwrap();

        let mut tape = TensorTape::new();
        let ids = AttentionWeightIds {
            wq: tape.leaf(mats[0].clone()),
            bq: tape.leaf(biases[0].clone()),
            wk: tape.leaf(mats[1].clone()),
            bk: tape.leaf(biases[1].clone()),
            wv: tape.leaf(mats[2].clone()),
            bv: tape.leaf(biases[2].clone()),
            wo: tape.leaf(mats[3].clone()),
            bo: tape.leaf(biases[3].clone()),
        };
        let qid = tape.leaf(q_in.clone());
        let kvid = tape.leaf(kv_in.clone());
        let out = multi_head_attention_taped(&mut tape, qid, kvid, &ids, heads).unwrap();

        assert_eq!(plain.data(), tape.value(out).data());
    }

    /// Chunk size must not change a single bit: every output row depends
    /// only on its own query row. Per-row evaluation is the degenerate
    /// chunking, so agreeing with it pins the invariant.
    #[test]
    fn chunking_is_invisible() {
        let d = 4;
        let q_in = fill(&[9, d], 3);
        let kv_in = fill(&[6, d], 4);
        let mats: Vec<Tensor> = (0..4).map(|i| fill(&[d, d], 30 + i)).collect();
        let zero = t(&[d], &[0.0; 4]);
        let w = AttentionWeights {
            wq: &mats[0],
            bq: &zero,
            wk: &mats[1],
            bk: &zero,
            wv: &mats[2],
            bv: &zero,
            wo: &mats[3],
            bo: &zero,
        };
        let all = multi_head_attention_plain(&q_in, &kv_in, &w, 2).unwrap();
        for i in 0..q_in.rows() {
            let one = Tensor::from_vec(vec![1, d], q_in.row(i).to_vec()).unwrap();
            let out = multi_head_attention_plain(&one, &kv_in, &w, 2).unwrap();
            assert_eq!(out.data(), all.row(i));
        }
    }

    #[test]
    fn indivisible_heads_is_typed_error() {
        let q = fill(&[2, 6], 5);
        let kv = fill(&[3, 6], 6);
        let m = fill(&[6, 6], 7);
        let b = t(&[6], &[0.0; 6]);
        let w = AttentionWeights {
            wq: &m,
            bq: &b,
            wk: &m,
            bk: &b,
            wv: &m,
            bv: &b,
            wo: &m,
            bo: &b,
        };
        assert!(matches!(
            multi_head_attention_plain(&q, &kv, &w, 4),
            Err(NnError::HeadsMismatch { dim: 6, heads: 4 })
        ));
    }

    #[test]
    fn empty_key_set_is_typed_error() {
        let q = fill(&[2, 4], 8);
        let kv = Tensor::zeros(vec![0, 4]);
        let m = fill(&[4, 4], 9);
        let b = t(&[4], &[0.0; 4]);
        let w = AttentionWeights {
            wq: &m,
            bq: &b,
            wk: &m,
            bk: &b,
            wv: &m,
            bv: &b,
            wo: &m,
            bo: &b,
        };
        assert!(matches!(
            multi_head_attention_plain(&q, &kv, &w, 2),
            Err(NnError::EmptyKeys)
        ));
    }
}
