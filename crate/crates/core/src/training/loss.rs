use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Mean two-class softmax cross-entropy of `[B, 2]` logits.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[u8]) -> Result<Var> {
    if let Some(row) = labels.iter().position(|&y| y > 1) {
        return Err(Error::Data {
            row,
            msg: format!("label {} is not 0 or 1", labels[row]),
        });
    }
    let idx: Vec<usize> = labels.iter().map(|&y| y as usize).collect();
    tape.cross_entropy(logits, &idx)
}
