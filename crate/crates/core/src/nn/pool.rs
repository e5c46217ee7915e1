//! Attention-based pooling: a spatial softmax over a learned logit channel
//! weights the remaining feature channels.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};

/// Pools `[..., n, d+1]` down to `[..., d]`: the last channel holds softmax
/// logits over the `n` locations, the first `d` channels are averaged under
/// those weights.
pub fn attention_pool<S: Scalar>(t: &mut Tape<S>, x: TensorId) -> Result<TensorId> {
    let shape = t.shape(x).to_vec();
    let rank = shape.len();
    if rank < 2 || shape[rank - 1] < 2 {
        return Err(Error::invalid(
            "attention_pool",
            format!("need [..., n, c>=2], got {shape:?}"),
        ));
    }
    let c = shape[rank - 1];
    let feats = t.narrow(x, rank - 1, 0, c - 1)?;
    let logits = t.narrow(x, rank - 1, c - 1, 1)?;
    let weights = t.softmax(logits, rank - 2)?;
    let weighted = t.mul(feats, weights)?;
    t.sum_axes(weighted, &[rank - 2], false)
}
