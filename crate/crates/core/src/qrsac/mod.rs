//! Quantile-regression soft actor-critic over recurrent sequence replay:
//! episode-structured buffer with stored hidden states, distributional
//! losses and n-step soft targets, and the gradient-step learner.

pub mod buffer;
pub mod learner;
pub mod loss;

pub use buffer::{
    BufferError, ReplayBuffer, Segment, SequenceSample, TransitionStep, DESK_CAPACITY_STEPS,
    GLOBAL_LEN,
};
pub use learner::{EpochMetrics, Learner, LearnerConfig};
pub use loss::{
    n_step_target, quantile_huber_loss, quantile_midpoints, random_shift, HUBER_KAPPA,
    NUM_QUANTILES,
};
