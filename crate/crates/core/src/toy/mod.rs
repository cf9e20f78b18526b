//! Desk-scale simulator for pretext-task GRPO: symbolic videos, a tabular
//! softmax policy and the training loops.

mod policy;
mod task;
mod trainer;
mod video;

pub use policy::{decode_token, encode_token, PolicyGradient, RowKey, Slot, ToyPolicy};
pub use task::{make_task, Difficulty, Route, TaskPool, ToyTask, UserQuestion, ANSWER_ARITY};
pub use trainer::{
    expected_reward, render_response, sample_group, train, train_with, Rollout, ToyConfig,
    TrainMode, TrainOutcome,
};
pub use video::{SymbolicVideo, ALPHABET, GRID};

pub(crate) use crate::derive_seed;
