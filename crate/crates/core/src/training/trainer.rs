use std::io::Write;
use std::path::Path;

use super::adam::{adam_step, clip_gradients, AdamState};
use super::hyperparams::Hyperparams;
use super::loss::weighted_bce_loss;
use crate::data::{EvalInstance, InteractionLog, SequenceBatch, SequenceBuilder};
use crate::error::{CasmError, Result};
use crate::eval::rank_instances;
use crate::model::{forward, Checkpoint, Dropout, ModelParams, Mode};
use crate::numerics::{Matrix, Real, Tape};
use crate::rng::{stream_rng, Stream};

/// Batch-mean loss and per-parameter gradients for one batch.
pub fn batch_loss_and_grads<T: Real>(
    params: &ModelParams<T>,
    batch: &SequenceBatch,
    alpha: &[f64],
    beta: f64,
    mode: &mut Mode<'_>,
) -> Result<(f64, Vec<Matrix<T>>)> {
    let mut tape = Tape::new();
    let out = forward(&mut tape, params, batch, mode)?;
    let loss = weighted_bce_loss(&mut tape, &out, batch, alpha, beta)?;
    let grads = tape.param_grads(loss, &params.set)?;
    Ok((tape.value(loss).get(0, 0).as_f64(), grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// 1-based.
    pub epoch: usize,
    /// 1-based within the epoch.
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    pub validation_hr10: Option<f64>,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Histories that training negatives must also avoid (typically the unsplit log).
    pub exclude: Option<&'a InteractionLog>,
    /// Instances scored for HR@10 after every epoch.
    pub validation: Option<&'a [EvalInstance]>,
    /// Directory for periodic checkpoints (`epoch_{n}.ckpt`).
    pub checkpoint_dir: Option<&'a Path>,
    /// Text stored in each checkpoint.
    pub checkpoint_meta: String,
    /// Capacity of the batch hand-off queue; 0 builds batches inline.
    pub prefetch: usize,
    /// Called after every epoch.
    pub on_epoch: Option<Box<dyn FnMut(&EpochSummary) + 'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput<T> {
    pub params: ModelParams<T>,
    pub trace: Vec<LossRecord>,
    pub epochs: Vec<EpochSummary>,
}

impl<T> TrainOutput<T> {
    /// CSV with columns `epoch,step,loss`.
    pub fn write_trace_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "epoch,step,loss")?;
        for r in &self.trace {
            writeln!(w, "{},{},{:.8}", r.epoch, r.step, r.loss)?;
        }
        Ok(())
    }
}

/// Trains from a fresh initialisation seeded by `hp.seed`.
pub fn train<T: Real>(log: &InteractionLog, hp: &Hyperparams, options: TrainOptions<'_>) -> Result<TrainOutput<T>> {
    hp.validate(log.num_behaviors())?;
    let config = hp.model_config(log.num_items(), log.num_behaviors());
    let params = ModelParams::init(&config, hp.seed)?;
    train_from(params, log, hp, options)
}

/// Continues training `params`.
pub fn train_from<T: Real>(
    mut params: ModelParams<T>,
    log: &InteractionLog,
    hp: &Hyperparams,
    mut options: TrainOptions<'_>,
) -> Result<TrainOutput<T>> {
    hp.validate(log.num_behaviors())?;
    let alpha = hp.alpha_for(log.num_behaviors())?;
    let mut builder = SequenceBuilder::new(log, hp.max_len, hp.batch_size, hp.seed)?;
    if let Some(full) = options.exclude {
        builder = builder.exclude_from(full);
    }
    let mut state = AdamState::new(&params);
    let mut trace = Vec::new();
    let mut epochs = Vec::new();
    for epoch in 1..=hp.epochs {
        let mut step = 0;
        let mut total = 0.0;
        builder.for_each_batch(epoch as u64, options.prefetch, |batch| {
            step += 1;
            let mut drop = Dropout { rate: hp.dropout, rng: stream_rng(hp.seed, Stream::Dropout, &[epoch as u64, step as u64]) };
            let diagnose = |e: CasmError| match e {
                CasmError::Numerical(msg) => CasmError::Numerical(format!(
                    "training diverged at epoch {epoch}, batch {step} (learning rate {}): {msg}",
                    hp.learning_rate
                )),
                other => other,
            };
            let (loss, mut grads) =
                batch_loss_and_grads(&params, &batch, &alpha, hp.beta, &mut Mode::Train(&mut drop)).map_err(diagnose)?;
            if !loss.is_finite() {
                return Err(diagnose(CasmError::Numerical(format!("loss is {loss}"))));
            }
            if let Some(max) = hp.grad_clip {
                clip_gradients(&mut grads, max);
            }
            adam_step(&mut params, &grads, &mut state, hp.learning_rate)?;
            trace.push(LossRecord { epoch, step, loss });
            total += loss;
            Ok(())
        })?;
        let validation_hr10 = match options.validation {
            Some(instances) if !instances.is_empty() => {
                let records = rank_instances(&params, instances)?;
                Some(records.iter().filter(|r| r.rank <= 10).count() as f64 / records.len() as f64)
            }
            _ => None,
        };
        let summary = EpochSummary { epoch, mean_loss: if step == 0 { 0.0 } else { total / step as f64 }, validation_hr10 };
        if let Some(cb) = options.on_epoch.as_mut() {
            cb(&summary);
        }
        epochs.push(summary);
        if let (Some(every), Some(dir)) = (hp.checkpoint_every, options.checkpoint_dir) {
            if every > 0 && epoch % every == 0 {
                let ckpt = Checkpoint { params: params.clone(), meta: options.checkpoint_meta.clone() };
                ckpt.save(dir.join(format!("epoch_{epoch}.ckpt")))?;
            }
        }
    }
    Ok(TrainOutput { params, trace, epochs })
}
