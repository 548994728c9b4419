//! Cross-entropy objective, AdamW and the epoch loop.

mod adamw;
mod loss;
mod trainer;

pub use adamw::{AdamW, OptimizerState};
pub use loss::cross_entropy;
pub use trainer::{
    evaluate, train, EpochStats, TrainConfig, TrainLog, TrainOutcome, TrainedModel,
};
