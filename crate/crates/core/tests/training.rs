//! Training-loop properties on generated data.

use flowtx_core::dataio::{synth, Dataset, Difficulty, FlowRecord, Profile};
use flowtx_core::model::{Classifier, ModelKind};
use flowtx_core::training::{cross_entropy, evaluate, train, OptimizerState, TrainConfig};
use flowtx_core::{Error, Tape, Tensor};
use flowtx_core::sentencing::fit_schema;

#[test]
fn separable_run_converges_with_smoothed_monotone_loss() {
    let data = synth(2000, 11, Difficulty::Separable).unwrap();
    let config = TrainConfig { seed: 11, ..TrainConfig::defaults_for(ModelKind::Pllm) };
    let out = train(&data, &config).unwrap();
    assert_eq!(out.log.epochs.len(), 10);

    let losses: Vec<f64> = out.log.epochs.iter().map(|e| e.train_loss).collect();
    let smoothed: Vec<f64> = losses.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
    assert!(
        smoothed.windows(2).all(|w| w[1] <= w[0]),
        "smoothed training loss rose: {smoothed:?}"
    );
    let best = out.log.epochs.iter().filter_map(|e| e.val_acc).fold(0.0, f64::max);
    assert!(best >= 0.99, "validation accuracy {best}");
}

#[test]
fn one_small_step_lowers_the_batch_loss() {
    let data = synth(200, 5, Difficulty::Separable).unwrap();
    let schema = fit_schema(data.records(), &data.profile).unwrap();
    let rows = schema.encode_all(&data.records()[..16]).unwrap();
    let labels: Vec<u8> = data.records()[..16].iter().map(|r| r.label).collect();

    for kind in [ModelKind::Pllm, ModelKind::Fnn] {
        for seed in 0..5 {
            let config = TrainConfig { learning_rate: 1e-6, ..TrainConfig::defaults_for(kind) };
            let mut model = Classifier::init(&config.model_config(schema.len()), seed).unwrap();
            let (before, _) = evaluate(&model, &rows, &labels).unwrap();

            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true);
            let x = tape.constant(Tensor::from_rows(&rows).unwrap());
            let logits = model.logits(&mut tape, &bound, x).unwrap();
            let loss = cross_entropy(&mut tape, logits, &labels).unwrap();
            tape.backward(loss).unwrap();
            let grads: Vec<Vec<f64>> = bound.vars().iter().map(|v| tape.grad(*v).unwrap().to_vec()).collect();
            let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            let mut state = OptimizerState::new(model.named().into_iter().map(|(_, t)| t));
            let mut params: Vec<&mut Tensor> = model.named_mut().into_iter().map(|(_, t)| t).collect();
            config.optimizer().step(&mut state, &mut params, &refs).unwrap();

            let (after, _) = evaluate(&model, &rows, &labels).unwrap();
            assert!(after < before, "{kind} seed {seed}: {before} -> {after}");
        }
    }
}

#[test]
fn identical_inputs_give_identical_parameters() {
    let data = synth(300, 2, Difficulty::noisy()).unwrap();
    let config = TrainConfig { epochs: 3, dim: 8, heads: 2, mlp_hidden: 32, ..TrainConfig::defaults_for(ModelKind::Pllm) };
    let a = train(&data, &config).unwrap();
    let b = train(&data, &config).unwrap();
    assert_eq!(a.model.classifier, b.model.classifier);
    assert_eq!(a.log, b.log);
    let c = train(&data, &TrainConfig { seed: 1, ..config }).unwrap();
    assert_ne!(a.model.classifier, c.model.classifier);
}

#[test]
fn empty_training_split_is_a_configuration_error() {
    let profile = Profile::synthetic();
    let records: Vec<FlowRecord> = synth(10, 0, Difficulty::Separable).unwrap().records()[..2].to_vec();
    let data = Dataset::new(records, profile, "two rows").unwrap();
    let config = TrainConfig { split: vec![0.1, 0.9], ..TrainConfig::defaults_for(ModelKind::Fnn) };
    assert!(matches!(train(&data, &config), Err(Error::Config(_))));
}

#[test]
fn exploding_learning_rate_reports_the_failing_batch() {
    let data = synth(200, 3, Difficulty::Separable).unwrap();
    let config = TrainConfig { learning_rate: 1e300, epochs: 5, ..TrainConfig::defaults_for(ModelKind::Fnn) };
    match train(&data, &config) {
        Err(Error::NonFiniteLoss { epoch, value, .. }) => {
            assert!(epoch >= 1);
            assert!(!value.is_finite());
        }
        other => panic!("expected a non-finite loss, got {other:?}"),
    }
}
