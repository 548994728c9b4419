//! Intrusion detection over network-flow records with a masked transformer
//! encoder.
//!
//! A flow record is encoded feature by feature into a vector in `[0, 1]^J`
//! ([`sentencing`]), each feature is lifted to its own token, and the token
//! sequence runs through a stack of pre-LN encoder blocks with causal
//! multi-head attention ([`model`]). A fully connected head maps the flattened
//! encoder output to two logits. Everything trains from scratch on a small
//! reverse-mode tape ([`autodiff`]) with AdamW ([`training`]), and evaluation
//! reports the usual IDS metric suite ([`metrics`]).

pub mod autodiff;
pub mod dataio;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod sentencing;
pub mod tensor;
pub mod training;

pub use autodiff::{Tape, Var};
pub use dataio::{Dataset, FlowRecord, Profile};
pub use error::{Error, Result};
pub use metrics::{ConfusionCounts, MetricsReport};
pub use model::{Classifier, ModelConfig, ModelKind, ModelParams};
pub use sentencing::{FeatureKind, FeatureSpec, Schema, TokenSequence};
pub use tensor::Tensor;
pub use training::{TrainConfig, TrainLog};
