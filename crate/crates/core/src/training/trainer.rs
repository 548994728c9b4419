use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::adamw::{AdamW, OptimizerState};
use super::loss::cross_entropy;
use crate::autodiff::Tape;
use crate::dataio::{split, Dataset, FlowRecord, Profile, Split};
use crate::error::{Error, Result};
use crate::metrics::{report, MetricsReport, DEFAULT_THRESHOLD};
use crate::model::{Classifier, FnnConfig, ModelConfig, ModelKind, PllmConfig, LAYER_NORM_EPS};
use crate::sentencing::{fit_schema, Schema};
use crate::tensor::Tensor;

/// Records per forward pass when evaluating without gradients.
const EVAL_CHUNK: usize = 256;

/// Every knob of a training run. Serialized flat so a JSON config file can
/// override any subset of fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub mlp_hidden: usize,
    pub causal_mask: bool,
    pub layer_norm_eps: f64,
    pub fnn_hidden: Vec<usize>,
    /// Train / validation / test fractions.
    pub split: Vec<f64>,
    pub threshold: f64,
}

impl TrainConfig {
    /// Defaults keyed by model kind: the transformer trains for 10 epochs at
    /// 2e-5, the FNN baseline for 100 epochs at 1e-3.
    pub fn defaults_for(model: ModelKind) -> Self {
        let (epochs, learning_rate) = match model {
            ModelKind::Pllm => (10, 2e-5),
            ModelKind::Fnn => (100, 1e-3),
        };
        Self {
            model,
            epochs,
            batch_size: 16,
            learning_rate,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            dim: 32,
            heads: 4,
            layers: 2,
            mlp_hidden: 128,
            causal_mask: true,
            layer_norm_eps: LAYER_NORM_EPS,
            fnn_hidden: vec![64, 64],
            split: vec![0.6, 0.2, 0.2],
            threshold: DEFAULT_THRESHOLD,
        }
    }

    /// Resolves a config: the model kind comes from `model` if given, else
    /// from the file, else the transformer; the file's fields then override
    /// that kind's defaults.
    pub fn resolve(model: Option<ModelKind>, file: Option<&Value>) -> Result<Self> {
        let overrides = match file {
            None => serde_json::Map::new(),
            Some(Value::Object(map)) => map.clone(),
            Some(_) => return Err(Error::Config("config file must hold a JSON object".into())),
        };
        let kind = match (model, overrides.get("model")) {
            (Some(kind), _) => kind,
            (None, Some(v)) => serde_json::from_value(v.clone())
                .map_err(|e| Error::Config(format!("field `model`: {e}")))?,
            (None, None) => ModelKind::Pllm,
        };
        let mut merged = serde_json::to_value(Self::defaults_for(kind))?;
        let target = merged.as_object_mut().expect("config serializes as an object");
        target.extend(overrides);
        target.insert("model".into(), serde_json::to_value(kind)?);
        let config: Self =
            serde_json::from_value(merged).map_err(|e| Error::Config(format!("config file: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            return fail(format!("eps must be positive, got {}", self.eps));
        }
        if !(2..=3).contains(&self.split.len()) || self.split.iter().any(|f| !(*f > 0.0)) {
            return fail(format!("split needs 2 or 3 positive fractions, got {:?}", self.split));
        }
        if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return fail(format!("split fractions must sum to 1, got {:?}", self.split));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail(format!("threshold must lie in [0, 1], got {}", self.threshold));
        }
        self.model_config(1).validate()
    }

    pub fn model_config(&self, features: usize) -> ModelConfig {
        match self.model {
            ModelKind::Pllm => ModelConfig::Pllm(PllmConfig {
                tokens: features,
                dim: self.dim,
                heads: self.heads,
                layers: self.layers,
                mlp_hidden: self.mlp_hidden,
                causal: self.causal_mask,
                ln_eps: self.layer_norm_eps,
            }),
            ModelKind::Fnn => ModelConfig::Fnn(FnnConfig {
                inputs: features,
                hidden: self.fnn_hidden.clone(),
            }),
        }
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

/// One row per completed epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.epochs {
            w.serialize(row)?;
        }
        if self.epochs.is_empty() {
            w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// A fitted schema and the classifier that consumes its encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub profile: Profile,
    pub schema: Schema,
    pub classifier: Classifier,
}

impl TrainedModel {
    pub fn check_compatible(&self) -> Result<()> {
        if self.schema.len() != self.classifier.inputs() {
            return Err(Error::Incompatible(format!(
                "model expects {} features but the schema encodes {}",
                self.classifier.inputs(),
                self.schema.len()
            )));
        }
        Ok(())
    }

    /// Attack probability per record.
    pub fn score(&self, records: &[FlowRecord]) -> Result<Vec<f64>> {
        self.check_compatible()?;
        let rows = self.schema.encode_all(records)?;
        self.classifier.predict_proba(&rows)
    }

    pub fn report(&self, records: &[FlowRecord], threshold: f64) -> Result<MetricsReport> {
        let scores = self.score(records)?;
        let truths: Vec<u8> = records.iter().map(|r| r.label).collect();
        report(&scores, &truths, threshold)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub log: TrainLog,
    pub split: Split,
    /// Held-out metrics; absent when the test part is empty or single-class.
    pub validation: Option<MetricsReport>,
    pub test: Option<MetricsReport>,
}

/// Mean cross-entropy and thresholded accuracy of `classifier` on encoded rows.
pub fn evaluate(classifier: &Classifier, rows: &[Vec<f64>], labels: &[u8]) -> Result<(f64, f64)> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Contract(format!("{} rows for {} labels", rows.len(), labels.len())));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, y) in rows.chunks(EVAL_CHUNK).zip(labels.chunks(EVAL_CHUNK)) {
        let mut tape = Tape::new();
        let bound = classifier.bind(&mut tape, false);
        let xv = tape.constant(Tensor::from_rows(x)?);
        let logits = classifier.logits(&mut tape, &bound, xv)?;
        correct += count_correct(tape.value(logits).data(), y);
        let l = cross_entropy(&mut tape, logits, y)?;
        loss += tape.value(l).data()[0] * x.len() as f64;
    }
    let n = rows.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Predicted attack when `p1 ≥ 0.5`, i.e. when `logit1 ≥ logit0`.
fn count_correct(logits: &[f64], labels: &[u8]) -> usize {
    logits
        .chunks(2)
        .zip(labels)
        .filter(|(l, &y)| u8::from(l[1] >= l[0]) == y)
        .count()
}

fn labelled(dataset: &Dataset, schema: &Schema, idx: &[usize]) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    let records = dataset.select(idx);
    let rows = schema.encode_all(&records)?;
    Ok((rows, records.iter().map(|r| r.label).collect()))
}

fn held_out(model: &TrainedModel, dataset: &Dataset, idx: &[usize], threshold: f64) -> Result<Option<MetricsReport>> {
    let records = dataset.select(idx);
    let classes = records.iter().fold([false; 2], |mut seen, r| {
        seen[r.label as usize] = true;
        seen
    });
    if classes != [true, true] {
        return Ok(None);
    }
    model.report(&records, threshold).map(Some)
}

/// Splits `dataset`, fits the schema on the training part only, and trains
/// a freshly initialised classifier with AdamW on shuffled mini-batches.
/// Bit-for-bit deterministic in `(dataset, config)`.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let parts = split(dataset, &config.split, config.seed)?;
    if parts.train().is_empty() {
        return Err(Error::Config("the training split is empty".into()));
    }
    let schema = fit_schema(&dataset.select(parts.train()), &dataset.profile)?;
    let (x, y) = labelled(dataset, &schema, parts.train())?;
    let val = if parts.validation().is_empty() {
        None
    } else {
        Some(labelled(dataset, &schema, parts.validation())?)
    };

    let mut classifier = Classifier::init(&config.model_config(schema.len()), config.seed)?;
    log::info!(
        "training {} ({} parameters) on {} records, {} features",
        classifier.kind(),
        classifier.parameter_count(),
        x.len(),
        schema.len()
    );

    let opt = config.optimizer();
    let mut state = OptimizerState::new(classifier.named().into_iter().map(|(_, t)| t));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
            let labels: Vec<u8> = idx.iter().map(|&i| y[i]).collect();

            let mut tape = Tape::new();
            let bound = classifier.bind(&mut tape, true);
            let xv = tape.constant(Tensor::from_rows(&rows)?);
            let logits = classifier.logits(&mut tape, &bound, xv)?;
            let loss = cross_entropy(&mut tape, logits, &labels)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch, value });
            }
            loss_sum += value * idx.len() as f64;
            correct += count_correct(tape.value(logits).data(), &labels);

            tape.backward(loss)?;
            let grads: Vec<Vec<f64>> = bound
                .vars()
                .into_iter()
                .map(|v| tape.grad(v).map_or_else(|| vec![0.0; tape.value(v).numel()], <[f64]>::to_vec))
                .collect();
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            let mut params: Vec<&mut Tensor> = classifier.named_mut().into_iter().map(|(_, t)| t).collect();
            opt.step(&mut state, &mut params, &grad_refs)?;
        }

        let (val_loss, val_acc) = match &val {
            Some((vx, vy)) => {
                let (l, a) = evaluate(&classifier, vx, vy)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / x.len() as f64,
            train_acc: correct as f64 / x.len() as f64,
            val_loss,
            val_acc,
        };
        log::info!(
            "epoch {epoch}: train loss {:.5} acc {:.4}, val loss {} acc {}",
            stats.train_loss,
            stats.train_acc,
            val_loss.map_or("-".into(), |v| format!("{v:.5}")),
            val_acc.map_or("-".into(), |v| format!("{v:.4}")),
        );
        log.epochs.push(stats);
    }

    let model = TrainedModel {
        profile: dataset.profile.clone(),
        schema,
        classifier,
    };
    let validation = held_out(&model, dataset, parts.validation(), config.threshold)?;
    let test = held_out(&model, dataset, parts.test(), config.threshold)?;
    Ok(TrainOutcome { model, log, split: parts, validation, test })
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::dataio::{synth, Difficulty};

    fn small(model: ModelKind) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            dim: 8,
            heads: 2,
            layers: 1,
            mlp_hidden: 16,
            fnn_hidden: vec![8],
            learning_rate: 1e-3,
            ..TrainConfig::defaults_for(model)
        }
    }

    #[test]
    fn kind_specific_defaults() {
        let p = TrainConfig::defaults_for(ModelKind::Pllm);
        assert_eq!((p.epochs, p.learning_rate, p.batch_size), (10, 2e-5, 16));
        assert_eq!((p.dim, p.heads, p.layers, p.mlp_hidden), (32, 4, 2, 128));
        let f = TrainConfig::defaults_for(ModelKind::Fnn);
        assert_eq!((f.epochs, f.learning_rate), (100, 1e-3));
        p.validate().unwrap();
        f.validate().unwrap();
    }

    #[test]
    fn resolve_merges_file_over_kind_defaults() {
        let file = json!({"model": "fnn", "epochs": 3});
        let c = TrainConfig::resolve(None, Some(&file)).unwrap();
        assert_eq!((c.model, c.epochs, c.learning_rate), (ModelKind::Fnn, 3, 1e-3));
        let c = TrainConfig::resolve(Some(ModelKind::Pllm), Some(&file)).unwrap();
        assert_eq!((c.model, c.epochs, c.learning_rate), (ModelKind::Pllm, 3, 2e-5));
        assert!(matches!(
            TrainConfig::resolve(None, Some(&json!({"epoch": 3}))),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            TrainConfig::resolve(None, Some(&json!({"split": [0.5, 0.4]}))),
            Err(Error::Config(_))
        ));
        let round = serde_json::to_value(&c).unwrap();
        assert_eq!(TrainConfig::resolve(None, Some(&round)).unwrap(), c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = TrainConfig::defaults_for(ModelKind::Pllm);
        for bad in [
            TrainConfig { epochs: 0, ..base.clone() },
            TrainConfig { batch_size: 0, ..base.clone() },
            TrainConfig { learning_rate: 0.0, ..base.clone() },
            TrainConfig { heads: 5, ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = synth(120, 3, Difficulty::Separable).unwrap();
        for kind in [ModelKind::Pllm, ModelKind::Fnn] {
            let a = train(&data, &small(kind)).unwrap();
            let b = train(&data, &small(kind)).unwrap();
            assert_eq!(a.log, b.log);
            assert_eq!(a.model, b.model);
            assert_eq!(a.log.epochs.len(), 2);
            assert!(a.log.epochs.iter().all(|e| e.val_acc.is_some()));
        }
    }

    #[test]
    fn log_csv_header() {
        let data = synth(60, 1, Difficulty::Separable).unwrap();
        let out = train(&data, &TrainConfig { epochs: 1, ..small(ModelKind::Fnn) }).unwrap();
        let mut buf = Vec::new();
        out.log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n1,"));
    }

    #[test]
    fn count_correct_uses_half_threshold() {
        assert_eq!(count_correct(&[0.0, 0.0, 1.0, -1.0], &[1, 0]), 2);
    }
}
