//! Multi-head attention built from tape primitives.

use crate::error::{Error, Result};

use super::tape::{Tape, TensorId};

/// Projection parameters for one attention block, already on the tape.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights {
    pub wq: TensorId,
    pub wk: TensorId,
    pub wv: TensorId,
    pub wo: TensorId,
    pub bq: TensorId,
    pub bk: TensorId,
    pub bv: TensorId,
    pub bo: TensorId,
}

/// Attention result plus the post-softmax probabilities for inspection.
#[derive(Debug, Clone, Copy)]
pub struct AttentionOutput {
    pub output: TensorId,
    /// Shape `[B*heads, T, T]`; each row sums to 1.
    pub probs: TensorId,
}

/// Scaled dot-product multi-head attention over token sequences.
///
/// `q`, `k`, `v` are `[T, D]` or `[B, T, D]` with identical shapes. Per head
/// `h`: `softmax(Q_h K_h^T / sqrt(D/heads)) V_h`; head outputs are
/// concatenated and linearly projected back to `D`.
pub fn multi_head_attention(
    tape: &mut Tape,
    q: TensorId,
    k: TensorId,
    v: TensorId,
    heads: usize,
    w: &AttentionWeights,
) -> Result<AttentionOutput> {
    let qshape = tape.shape(q).to_vec();
    if tape.shape(k) != qshape.as_slice() || tape.shape(v) != qshape.as_slice() {
        return Err(Error::shape(format!(
            "attention: q/k/v shapes differ: {:?} / {:?} / {:?}",
            qshape,
            tape.shape(k),
            tape.shape(v)
        )));
    }
    let (batch, t_len, d) = match qshape.len() {
        2 => (1, qshape[0], qshape[1]),
        3 => (qshape[0], qshape[1], qshape[2]),
        _ => {
            return Err(Error::shape(format!(
                "attention: expected [T,D] or [B,T,D], got {qshape:?}"
            )))
        }
    };
    if heads == 0 || d % heads != 0 {
        return Err(Error::config(format!(
            "attention: model dim {d} not divisible by {heads} heads"
        )));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let project = |tape: &mut Tape, x: TensorId, w: TensorId, b: TensorId| -> Result<TensorId> {
        let flat = tape.reshape(x, &[batch * t_len, d])?;
        let p = tape.matmul(flat, w)?;
        let p = tape.bias_add(p, b)?;
        // [B,T,heads,dh] -> [B,heads,T,dh] -> [B*heads,T,dh]
        let p = tape.reshape(p, &[batch, t_len, heads, dh])?;
        let p = tape.permute(p, &[0, 2, 1, 3])?;
        tape.reshape(p, &[batch * heads, t_len, dh])
    };

    let qh = project(tape, q, w.wq, w.bq)?;
    let kh = project(tape, k, w.wk, w.bk)?;
    let vh = project(tape, v, w.wv, w.bv)?;

    let kt = tape.permute(kh, &[0, 2, 1])?;
    let scores = tape.matmul(qh, kt)?;
    let scores = tape.scale(scores, scale);
    let probs = tape.softmax(scores, 2)?;

    let ctx = tape.matmul(probs, vh)?;
    let ctx = tape.reshape(ctx, &[batch, heads, t_len, dh])?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, &[batch * t_len, d])?;
    let out = tape.matmul(ctx, w.wo)?;
    let out = tape.bias_add(out, w.bo)?;
    let output = tape.reshape(out, &qshape)?;
    Ok(AttentionOutput { output, probs })
}
