//! Every differentiable op and both full models against central differences.

use flowtx_core::autodiff::{Tape, Var};
use flowtx_core::gradcheck::{central_difference, check_classifier, max_relative_error, DEFAULT_STEP};
use flowtx_core::model::{Classifier, FnnConfig, ModelConfig, PllmConfig, LAYER_NORM_EPS};
use flowtx_core::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Checks `d/dx_i sum(f(x) ⊙ R)` for a fixed random weighting `R`, so every
/// output element contributes with a distinct coefficient.
fn check<F>(inputs: Vec<Tensor>, f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut weights: Option<Tensor> = None;
    let mut scalar = |tensors: &[Tensor], trainable: bool| -> (Tape, Vec<Var>, Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors
            .iter()
            .map(|t| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        let out = f(&mut tape, &vars).unwrap();
        let w = weights
            .get_or_insert_with(|| random(&mut rng, tape.shape(out), -1.0, 1.0))
            .clone();
        let w = tape.constant(w);
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod);
        (tape, vars, loss)
    };

    let (mut tape, vars, loss) = scalar(&inputs, true);
    tape.backward(loss).unwrap();
    for (k, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).expect("gradient reaches every input").to_vec();
        let numeric = central_difference(inputs[k].data(), DEFAULT_STEP, |values| {
            let mut probe = inputs.clone();
            probe[k].data_mut().copy_from_slice(values);
            let (t, _, l) = scalar(&probe, false);
            t.value(l).data()[0]
        });
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < TOL, "input {k}: relative error {err}");
    }
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(2024)
}

#[test]
fn broadcast_add_sub_mul() {
    let mut r = rng();
    let a = random(&mut r, &[2, 1, 3], -1.0, 1.0);
    let b = random(&mut r, &[4, 1], -1.0, 1.0);
    check(vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1]));
    check(vec![a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]));
    check(vec![a, b], |t, v| t.mul(v[0], v[1]));
    let m = random(&mut r, &[3, 5], -1.0, 1.0);
    check(vec![m.clone(), m], |t, v| t.mul(v[0], v[1]));
}

#[test]
fn unary_ops() {
    let mut r = rng();
    let x = random(&mut r, &[3, 4], 0.1, 2.0);
    check(vec![x.clone()], |t, v| Ok(t.scale(v[0], -2.5)));
    check(vec![x.clone()], |t, v| Ok(t.log(v[0])));
    check(vec![x.clone()], |t, v| Ok(t.sum(v[0])));
    check(vec![x], |t, v| Ok(t.mean(v[0])));
    // keep clear of the kink at zero
    let data: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 0.3 + i as f64 } else { -0.4 - i as f64 }).collect();
    check(vec![Tensor::new(&[3, 4], data).unwrap()], |t, v| Ok(t.relu(v[0])));
}

#[test]
fn matmul_variants() {
    let mut r = rng();
    check(vec![random(&mut r, &[3, 4], -1.0, 1.0), random(&mut r, &[4, 2], -1.0, 1.0)], |t, v| {
        t.matmul(v[0], v[1])
    });
    check(vec![random(&mut r, &[2, 3, 4], -1.0, 1.0), random(&mut r, &[4, 5], -1.0, 1.0)], |t, v| {
        t.matmul(v[0], v[1])
    });
    check(vec![random(&mut r, &[2, 3, 4], -1.0, 1.0), random(&mut r, &[2, 4, 3], -1.0, 1.0)], |t, v| {
        t.matmul(v[0], v[1])
    });
}

#[test]
fn shape_ops() {
    let mut r = rng();
    let x = random(&mut r, &[2, 3, 4], -1.0, 1.0);
    check(vec![x.clone()], |t, v| t.transpose(v[0]));
    check(vec![x.clone()], |t, v| t.reshape(v[0], &[6, 4]));
    let y = random(&mut r, &[2, 3, 2], -1.0, 1.0);
    check(vec![x, y], |t, v| t.concat_last(v));
}

#[test]
fn softmax_on_each_axis_and_causal() {
    let mut r = rng();
    let x = random(&mut r, &[2, 3, 4], -2.0, 2.0);
    for axis in 0..3 {
        check(vec![x.clone()], move |t, v| t.softmax(v[0], axis));
    }
    check(vec![random(&mut r, &[2, 5, 5], -2.0, 2.0)], |t, v| t.causal_softmax(v[0]));
}

#[test]
fn layer_norm_all_inputs() {
    let mut r = rng();
    let x = random(&mut r, &[2, 3, 4], -2.0, 2.0);
    let g = random(&mut r, &[4], 0.5, 1.5);
    let b = random(&mut r, &[4], -0.5, 0.5);
    check(vec![x, g, b], |t, v| t.layer_norm(v[0], v[1], v[2], LAYER_NORM_EPS));
}

#[test]
fn cross_entropy_logits() {
    let mut r = rng();
    check(vec![random(&mut r, &[4, 2], -3.0, 3.0)], |t, v| t.cross_entropy(v[0], &[0, 1, 1, 0]));
}

fn batch(rng: &mut ChaCha8Rng, b: usize, j: usize) -> Vec<Vec<f64>> {
    (0..b).map(|_| (0..j).map(|_| rng.random()).collect()).collect()
}

#[test]
fn fnn_end_to_end_gradient() {
    let cfg = ModelConfig::Fnn(FnnConfig { inputs: 13, hidden: vec![16, 16] });
    let model = Classifier::init(&cfg, 4).unwrap();
    let rows = batch(&mut rng(), 4, 13);
    for p in check_classifier(&model, &rows, &[0, 1, 1, 0], DEFAULT_STEP).unwrap() {
        assert!(p.max_relative_error < 1e-5, "{}: {}", p.name, p.max_relative_error);
    }
}

#[test]
fn transformer_end_to_end_gradient_without_mask() {
    let cfg = ModelConfig::Pllm(PllmConfig {
        tokens: 5,
        dim: 4,
        heads: 2,
        layers: 1,
        mlp_hidden: 8,
        causal: false,
        ln_eps: LAYER_NORM_EPS,
    });
    let model = Classifier::init(&cfg, 6).unwrap();
    let rows = batch(&mut rng(), 3, 5);
    for p in check_classifier(&model, &rows, &[1, 0, 1], DEFAULT_STEP).unwrap() {
        assert!(p.max_relative_error < 1e-4, "{}: {}", p.name, p.max_relative_error);
    }
}

// At initialisation a zero feature gives an all-zero token, where LayerNorm is
// regularised only by eps. The tape is still exact there; central differences
// just need a finer step.
#[test]
fn zero_token_at_initialisation() {
    let cfg = ModelConfig::Pllm(PllmConfig {
        tokens: 6,
        dim: 4,
        heads: 2,
        layers: 1,
        mlp_hidden: 8,
        causal: true,
        ln_eps: LAYER_NORM_EPS,
    });
    let model = Classifier::init(&cfg, 9).unwrap();
    let mut rows = batch(&mut rng(), 2, 6);
    rows[0][2] = 0.0;
    rows[1][4] = 0.0;
    for p in check_classifier(&model, &rows, &[1, 0], 1e-7).unwrap() {
        assert!(p.max_relative_error < 1e-4, "{}: {}", p.name, p.max_relative_error);
    }
}
