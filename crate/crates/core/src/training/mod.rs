//! Tabular alignment training: losses over best/worst records and a small
//! optimizer loop that tracks win rate and KL against the reference.

mod beta;
mod gradcheck;
mod loss;
mod optim;
mod records;
mod tabular;
mod train;

pub use beta::{beta_star, BetaStar};
pub use gradcheck::gradient_check;
pub use loss::{
    evaluate, loss_bonbon, loss_dpo, loss_ipo, loss_ipo_bon, loss_sft_bon, LossKind, LossValue, Objective,
};
pub use optim::{Optimizer, OptimizerKind, RMSPROP_DECAY, RMSPROP_EPSILON};
pub use records::{PromptPairs, TrainingSet, WeightedPair};
pub use tabular::{log_softmax, TabularPolicy};
pub use train::{
    policy_summary, train, train_exact, train_on_set, TraceRow, TrainConfig, TrainTrace, DEFAULT_ALPHA,
    DEFAULT_LEARNING_RATE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("beta*_n is undefined for n = {0}; it needs n >= 2")]
    BetaStarUndefined(u32),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("record refers to unknown prompt {0:?}")]
    UnknownPrompt(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss diverged at step {step}")]
    Divergence {
        step: usize,
        trace: TrainTrace,
        policy: Box<TabularPolicy>,
    },
}
