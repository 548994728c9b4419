use super::attention::multi_head_attention;
use super::params::{EncoderBlockWeights, LinearWeights};
use crate::autodiff::{Tape, Var};
use crate::error::Result;

pub(crate) fn linear(tape: &mut Tape, x: Var, w: &LinearWeights<Var>) -> Result<Var> {
    let y = tape.matmul(x, w.weight)?;
    tape.add(y, w.bias)
}

/// One pre-LN encoder layer:
///
/// ```text
/// Z ← MHA(LN(Z)) + Z
/// Z ← MLP(LN(Z)) + Z
/// Z ← LN(Z)
/// ```
///
/// The MLP is `Linear → ReLU → Linear`.
pub fn encoder_block(
    tape: &mut Tape,
    z: Var,
    params: &EncoderBlockWeights<Var>,
    causal: bool,
    eps: f64,
) -> Result<Var> {
    let h = tape.layer_norm(z, params.ln_attn.gamma, params.ln_attn.beta, eps)?;
    let attn = multi_head_attention(tape, h, &params.attn, causal)?;
    let z = tape.add(attn.out, z)?;

    let h = tape.layer_norm(z, params.ln_mlp.gamma, params.ln_mlp.beta, eps)?;
    let h = linear(tape, h, &params.mlp_in)?;
    let h = tape.relu(h);
    let h = linear(tape, h, &params.mlp_out)?;
    let z = tape.add(h, z)?;

    tape.layer_norm(z, params.ln_out.gamma, params.ln_out.beta, eps)
}
