use super::trainer::batch_loss_and_grads;
use crate::data::SequenceBatch;
use crate::error::Result;
use crate::model::{ModelParams, Mode};
use crate::numerics::gradcheck::{finite_diff_check, GradCheckReport};

/// Finite-difference check of the full model and loss on one batch, in f64
/// with dropout disabled.
pub fn check_model_gradients(
    params: &ModelParams<f64>,
    batch: &SequenceBatch,
    alpha: &[f64],
    beta: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let config = params.config;
    let mut set = params.set.clone();
    finite_diff_check(
        |set| {
            let p = ModelParams::from_set(&config, set.clone())?;
            batch_loss_and_grads(&p, batch, alpha, beta, &mut Mode::Infer)
        },
        &mut set,
        1e-5,
        samples,
        seed,
    )
}
