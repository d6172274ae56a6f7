//! Desk-scale GRPO: a tabular softmax policy trained on a synthetic
//! structured-output task, scored by the real reward engine.
//!
//! The gradient is derived by hand. With advantages held fixed,
//! `∂J/∂logits = Σ_i s_i ∂log π(o_i)/∂logits` where `s_i` is the
//! per-output sensitivity from [`crate::grpo::logp_sensitivities`] and
//! `∂log π(a)/∂z = (onehot(a) - softmax(z/T)) / T` per slot.

mod policy;
mod task;
mod trainer;

pub use policy::{PolicyError, SoftmaxPolicy};
pub use task::{Slot, TaskSettings, ToyTask};
pub use trainer::{
    fixed_group_gradient, fixed_group_objective, metrics_stem, moving_average, run_training,
    run_training_grid, sample_group, train, SampledGroup, ToyConfig, ToyTrainer, TrainError,
    TrainMetrics, TrainRow, TrainSettings, ABLATION_GRID,
};
