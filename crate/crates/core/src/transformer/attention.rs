//! Attention primitives and the positional table.

use crate::tensor::{Tape, TensorError, Var, MASKED_LOGIT};

/// Sinusoidal table, row-major `len x d_model`.
pub fn positional_encoding(len: usize, d_model: usize) -> Vec<f64> {
    let mut out = vec![0.0; len * d_model];
    for p in 0..len {
        for j in 0..d_model {
            let i2 = (j - j % 2) as f64;
            let angle = p as f64 / 10000f64.powf(i2 / d_model as f64);
            out[p * d_model + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Row-major `n x n` mask allowing query `i` to see keys `0..=i`.
pub fn causal_mask(n: usize) -> Vec<bool> {
    (0..n * n).map(|k| k % n <= k / n).collect()
}

/// Softmax of `Q K^T / sqrt(d_k)` with masked positions pushed to [`MASKED_LOGIT`].
/// `mask` is row-major `n x m`, `true` meaning visible.
pub fn attention_weights(tape: &mut Tape, q: Var, k: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
    let (n, dk) = tape.shape(q);
    let (m, dk2) = tape.shape(k);
    if dk != dk2 {
        return Err(TensorError::ShapeMismatch { op: "attention", left: vec![n, dk], right: vec![m, dk2] });
    }
    let scores = tape.matmul_t(q, k)?;
    let mut scores = tape.scale(scores, 1.0 / (dk as f64).sqrt());
    if let Some(mask) = mask {
        if mask.len() != n * m {
            return Err(TensorError::ShapeMismatch { op: "attention mask", left: vec![n, m], right: vec![mask.len()] });
        }
        let add: Vec<f64> = mask.iter().map(|&vis| if vis { 0.0 } else { MASKED_LOGIT }).collect();
        scores = tape.add_const(scores, &add)?;
    }
    Ok(tape.softmax_rows(scores))
}

pub fn scaled_dot_attention(tape: &mut Tape, q: Var, k: Var, v: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
    let (m, _) = tape.shape(k);
    let (mv, dv) = tape.shape(v);
    if m != mv {
        return Err(TensorError::ShapeMismatch { op: "attention values", left: vec![m], right: vec![mv, dv] });
    }
    let w = attention_weights(tape, q, k, mask)?;
    tape.matmul(w, v)
}

/// Per-head projections `W_i^Q, W_i^K, W_i^V`, each `d_model x d_k`.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
}

/// `Concat(head_1..head_h) W^O` with `head_i = Attention(x_q W_i^Q, x_kv W_i^K, x_kv W_i^V)`.
pub fn multi_head(tape: &mut Tape, x_q: Var, x_kv: Var, heads: &[HeadVars], wo: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
    let outs = heads
        .iter()
        .map(|h| {
            let q = tape.matmul(x_q, h.wq)?;
            let k = tape.matmul(x_kv, h.wk)?;
            let v = tape.matmul(x_kv, h.wv)?;
            scaled_dot_attention(tape, q, k, v, mask)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    tape.matmul(cat, wo)
}
