//! Multi-head scaled dot-product attention with an optional causal mask.

use super::params::AttentionWeights;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

pub struct AttentionOutput {
    /// `[.., T, C]`
    pub out: Var,
    /// Per-head attention weights, each `[.., T, T]`.
    pub weights: Vec<Var>,
}

/// For each head `h`: `softmax(Q_h K_hᵀ / √d) V_h` with `d = C / H`; the head
/// outputs are concatenated along the channel axis and mixed by `W`.
/// With `causal`, position `i` attends only to positions `≤ i`.
pub fn multi_head_attention(
    tape: &mut Tape,
    z: Var,
    params: &AttentionWeights<Var>,
    causal: bool,
) -> Result<AttentionOutput> {
    let c = *tape.shape(z).last().expect("rank >= 1");
    let h = params.heads.len();
    if h == 0 || c % h != 0 {
        return Err(Error::Config(format!("{h} heads do not divide dimension {c}")));
    }
    let scale = 1.0 / ((c / h) as f64).sqrt();
    let mut outputs = Vec::with_capacity(h);
    let mut weights = Vec::with_capacity(h);
    for head in &params.heads {
        let q = tape.matmul(z, head.w_q)?;
        let k = tape.matmul(z, head.w_k)?;
        let v = tape.matmul(z, head.w_v)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, scale);
        let p = if causal {
            tape.causal_softmax(scores)?
        } else {
            let axis = tape.shape(scores).len() - 1;
            tape.softmax(scores, axis)?
        };
        outputs.push(tape.matmul(p, v)?);
        weights.push(p);
    }
    let cat = tape.concat_last(&outputs)?;
    let out = tape.matmul(cat, params.w_out)?;
    Ok(AttentionOutput { out, weights })
}
