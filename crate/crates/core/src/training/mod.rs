//! Weighted BCE objective, Adam and the epoch loop.

pub mod adam;
pub mod gradcheck;
pub mod hyperparams;
pub mod loss;
pub mod trainer;

pub use adam::{adam_step, clip_gradients, AdamState};
pub use gradcheck::check_model_gradients;
pub use hyperparams::Hyperparams;
pub use loss::{loss_weights, weighted_bce_loss, weighted_bce_value, LossValue};
pub use trainer::{batch_loss_and_grads, train, train_from, EpochSummary, LossRecord, TrainOptions, TrainOutput};
