//! The transformer classifier and the FNN baseline.
//!
//! Both models take encoded records `x ∈ [0, 1]^{B×J}` and return raw logits
//! `B × 2`; probabilities are only formed in the loss and at scoring time.

mod attention;
mod encoder;
mod params;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::sentencing::{embed, EmbeddingWeights};
use crate::tensor::Tensor;

pub use attention::{multi_head_attention, AttentionOutput};
pub use encoder::encoder_block;
pub use params::{
    parameter_count, AttentionParams, AttentionWeights, EncoderBlockParams, EncoderBlockWeights,
    FnnParams, FnnWeights, HeadWeights, LayerNormWeights, LinearWeights, ModelParams, ParamTree,
    PllmWeights,
};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Records scored per forward pass at inference time.
const SCORE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pllm,
    Fnn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Pllm => "pllm",
            ModelKind::Fnn => "fnn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pllm" | "pllm-cs" => Ok(ModelKind::Pllm),
            "fnn" => Ok(ModelKind::Fnn),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PllmConfig {
    /// Token count `T` (= feature count `J`).
    pub tokens: usize,
    /// Channel size `C`.
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub mlp_hidden: usize,
    pub causal: bool,
    pub ln_eps: f64,
}

impl PllmConfig {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.tokens == 0 || self.dim == 0 || self.mlp_hidden == 0 {
            return bad(format!("token count, dimension and MLP width must be positive: {self:?}"));
        }
        if self.layers == 0 {
            return bad("at least one encoder block is required".into());
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return bad(format!("{} heads do not divide dimension {}", self.heads, self.dim));
        }
        if !(self.ln_eps > 0.0) {
            return bad(format!("layer-norm eps must be positive, got {}", self.ln_eps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnConfig {
    /// Input width `J`.
    pub inputs: usize,
    pub hidden: Vec<usize>,
}

impl FnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("FNN widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Pllm(PllmConfig),
    Fnn(FnnConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Pllm(_) => ModelKind::Pllm,
            ModelConfig::Fnn(_) => ModelKind::Fnn,
        }
    }

    /// Number of encoded features the model consumes.
    pub fn inputs(&self) -> usize {
        match self {
            ModelConfig::Pllm(c) => c.tokens,
            ModelConfig::Fnn(c) => c.inputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Pllm(c) => c.validate(),
            ModelConfig::Fnn(c) => c.validate(),
        }
    }
}

/// Glorot-initialised transformer parameters; biases and positions start at
/// zero, layer-norm gains at one. Fully determined by `seed`.
pub fn init_params(config: &PllmConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, c, d) = (config.tokens, config.dim, config.head_dim());
    let embedding = EmbeddingWeights {
        weight: params::glorot(&mut rng, t, c),
        bias: Tensor::zeros(&[t, c]),
        position: Tensor::zeros(&[t, c]),
    };
    let blocks = (0..config.layers)
        .map(|_| EncoderBlockWeights {
            ln_attn: params::layer_norm(c),
            attn: AttentionWeights {
                heads: (0..config.heads)
                    .map(|_| HeadWeights {
                        w_q: params::glorot(&mut rng, c, d),
                        w_k: params::glorot(&mut rng, c, d),
                        w_v: params::glorot(&mut rng, c, d),
                    })
                    .collect(),
                w_out: params::glorot(&mut rng, c, c),
            },
            ln_mlp: params::layer_norm(c),
            mlp_in: params::linear(&mut rng, c, config.mlp_hidden),
            mlp_out: params::linear(&mut rng, config.mlp_hidden, c),
            ln_out: params::layer_norm(c),
        })
        .collect();
    let head = params::linear(&mut rng, t * c, 2);
    Ok(PllmWeights { embedding, blocks, head })
}

pub fn init_fnn(config: &FnnConfig, seed: u64) -> Result<FnnParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut widths = vec![config.inputs];
    widths.extend(&config.hidden);
    widths.push(2);
    let layers = widths
        .windows(2)
        .map(|w| params::linear(&mut rng, w[0], w[1]))
        .collect();
    Ok(FnnWeights { layers })
}

/// Runs the encoder stack over a `[B, T, C]` token batch.
pub fn encode_tokens(
    tape: &mut Tape,
    tokens: Var,
    params: &PllmWeights<Var>,
    config: &PllmConfig,
) -> Result<Var> {
    params.blocks.iter().try_fold(tokens, |z, block| {
        encoder_block(tape, z, block, config.causal, config.ln_eps)
    })
}

/// Sentencing, `L` encoder blocks, flatten, fully connected head.
pub fn pllm_logits(
    tape: &mut Tape,
    x: Var,
    params: &PllmWeights<Var>,
    config: &PllmConfig,
) -> Result<Var> {
    let tokens = embed(tape, x, &params.embedding)?;
    let z = encode_tokens(tape, tokens, params, config)?;
    let b = tape.shape(z)[0];
    let flat = tape.reshape(z, &[b, config.tokens * config.dim])?;
    encoder::linear(tape, flat, &params.head)
}

/// `Linear → ReLU → … → Linear(2)`.
pub fn fnn_logits(tape: &mut Tape, x: Var, params: &FnnWeights<Var>) -> Result<Var> {
    let last = params.layers.len() - 1;
    params.layers.iter().enumerate().try_fold(x, |h, (i, layer)| {
        let y = encoder::linear(tape, h, layer)?;
        Ok(if i < last { tape.relu(y) } else { y })
    })
}

/// A model of either kind with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Pllm { config: PllmConfig, params: ModelParams },
    Fnn { config: FnnConfig, params: FnnParams },
}

/// A classifier's parameters recorded on a tape.
#[derive(Debug, Clone)]
pub enum BoundParams {
    Pllm(PllmWeights<Var>),
    Fnn(FnnWeights<Var>),
}

impl BoundParams {
    pub fn vars(&self) -> Vec<Var> {
        match self {
            BoundParams::Pllm(p) => p.named().into_iter().map(|(_, v)| *v).collect(),
            BoundParams::Fnn(p) => p.named().into_iter().map(|(_, v)| *v).collect(),
        }
    }
}

impl Classifier {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match config {
            ModelConfig::Pllm(c) => Classifier::Pllm {
                config: c.clone(),
                params: init_params(c, seed)?,
            },
            ModelConfig::Fnn(c) => Classifier::Fnn {
                config: c.clone(),
                params: init_fnn(c, seed)?,
            },
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Classifier::Pllm { config, .. } => ModelConfig::Pllm(config.clone()),
            Classifier::Fnn { config, .. } => ModelConfig::Fnn(config.clone()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Classifier::Pllm { .. } => ModelKind::Pllm,
            Classifier::Fnn { .. } => ModelKind::Fnn,
        }
    }

    pub fn inputs(&self) -> usize {
        self.config().inputs()
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        match self {
            Classifier::Pllm { params, .. } => params.named(),
            Classifier::Fnn { params, .. } => params.named(),
        }
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match self {
            Classifier::Pllm { params, .. } => params.named_mut(),
            Classifier::Fnn { params, .. } => params.named_mut(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Rebuilds a classifier from named parameter arrays.
    pub fn from_named(config: &ModelConfig, mut arrays: BTreeMap<String, Tensor>) -> Result<Self> {
        let mut model = Self::init(config, 0)?;
        for (name, slot) in model.named_mut() {
            let t = arrays
                .remove(&name)
                .ok_or_else(|| Error::Incompatible(format!("parameter `{name}` is missing")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Incompatible(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        if let Some(extra) = arrays.keys().next() {
            return Err(Error::Incompatible(format!("unexpected parameter `{extra}`")));
        }
        Ok(model)
    }

    /// Records every parameter on `tape`, trainable or frozen.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let mut f = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        match self {
            Classifier::Pllm { params, .. } => BoundParams::Pllm(params.map(&mut f)),
            Classifier::Fnn { params, .. } => BoundParams::Fnn(params.map(&mut f)),
        }
    }

    /// Logits `[B, 2]` for encoded inputs `x: [B, J]`.
    pub fn logits(&self, tape: &mut Tape, bound: &BoundParams, x: Var) -> Result<Var> {
        let j = tape.shape(x).get(1).copied().unwrap_or(0);
        if tape.shape(x).len() != 2 || j != self.inputs() {
            return Err(Error::Incompatible(format!(
                "model expects {} features per record, got input shape {:?}",
                self.inputs(),
                tape.shape(x)
            )));
        }
        match (self, bound) {
            (Classifier::Pllm { config, .. }, BoundParams::Pllm(p)) => pllm_logits(tape, x, p, config),
            (Classifier::Fnn { .. }, BoundParams::Fnn(p)) => fnn_logits(tape, x, p),
            _ => Err(Error::Contract("bound parameters belong to a different model kind".into())),
        }
    }

    /// Inference-only logits for encoded rows, computed in fixed-size chunks.
    /// Each row's result does not depend on the chunking.
    pub fn predict_logits(&self, rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(SCORE_CHUNK) {
            let mut tape = Tape::new();
            let bound = self.bind(&mut tape, false);
            let x = tape.constant(Tensor::from_rows(chunk)?);
            let logits = self.logits(&mut tape, &bound, x)?;
            out.extend(tape.value(logits).data().chunks(2).map(|l| [l[0], l[1]]));
        }
        Ok(out)
    }

    /// Positive-class (attack) probability per row.
    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let logits = self.predict_logits(rows)?;
        let probs: Vec<f64> = logits.iter().map(|l| positive_probability(*l)).collect();
        if let Some(i) = probs.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("score for row {i} is not finite")));
        }
        Ok(probs)
    }
}

/// `softmax(logits)[1]`.
pub fn positive_probability(logits: [f64; 2]) -> f64 {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    e1 / (e0 + e1)
}
