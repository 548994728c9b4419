//! Central finite-difference gradient checking.
//!
//! Only the scalar function is evaluated here, never the tape's backward
//! rules, so the numeric estimate stays independent of the analytic path.

use crate::autodiff::Tape;
use crate::error::Result;
use crate::model::Classifier;
use crate::tensor::Tensor;
use crate::training::{cross_entropy, evaluate};

/// Default step for central differences in `f64`.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Magnitudes below this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `(f(x + h e_i) − f(x − h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Largest [`relative_error`]; any NaN counts as an infinite error.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .map(|e| if e.is_nan() { f64::INFINITY } else { e })
        .fold(0.0, f64::max)
}

/// Worst relative gradient error of one named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradError {
    pub name: String,
    pub max_relative_error: f64,
}

/// Compares the tape's gradient of the mean cross-entropy on `(rows, labels)`
/// with central differences, for every scalar parameter of `model`.
pub fn check_classifier(model: &Classifier, rows: &[Vec<f64>], labels: &[u8], h: f64) -> Result<Vec<ParamGradError>> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let x = tape.constant(Tensor::from_rows(rows)?);
    let logits = model.logits(&mut tape, &bound, x)?;
    let loss = cross_entropy(&mut tape, logits, labels)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = bound
        .vars()
        .into_iter()
        .map(|v| tape.grad(v).map_or_else(|| vec![0.0; tape.value(v).numel()], <[f64]>::to_vec))
        .collect();

    let names: Vec<String> = model.named().into_iter().map(|(n, _)| n).collect();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(names.len());
    for (k, name) in names.into_iter().enumerate() {
        let start = model.named()[k].1.data().to_vec();
        let numeric = central_difference(&start, h, |values| {
            probe.named_mut()[k].1.data_mut().copy_from_slice(values);
            evaluate(&probe, rows, labels).map_or(f64::NAN, |(l, _)| l)
        });
        probe.named_mut()[k].1.data_mut().copy_from_slice(&start);
        out.push(ParamGradError {
            name,
            max_relative_error: max_relative_error(&analytic[k], &numeric),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_derivative() {
        let g = central_difference(&[2.0, -1.0], DEFAULT_STEP, |x| x[0].powi(3) + 4.0 * x[1]);
        assert!(relative_error(g[0], 12.0) < 1e-9);
        assert!(relative_error(g[1], 4.0) < 1e-9);
    }

    #[test]
    fn floor_keeps_tiny_values_absolute() {
        assert!(relative_error(1e-12, 2e-12) < 1e-5);
        assert!((relative_error(1.0, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nan_is_never_a_pass() {
        assert_eq!(max_relative_error(&[1.0, 2.0], &[1.0, f64::NAN]), f64::INFINITY);
    }
}
