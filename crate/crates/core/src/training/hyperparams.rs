use crate::error::{CasmError, Result};
use crate::model::ModelConfig;

/// Model and optimisation settings for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub max_len: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Per-behavior positive weights; `None` means all ones.
    pub alpha: Option<Vec<f64>>,
    pub beta: f64,
    pub seed: u64,
    pub use_context: bool,
    pub plain_block: bool,
    pub eval_target_behavior_only: bool,
    pub validation_split: bool,
    pub primary_behavior: usize,
    /// Global gradient-norm cap; off when `None`.
    pub grad_clip: Option<f64>,
    /// Write a checkpoint every this many epochs; off when `None`.
    pub checkpoint_every: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            dim: 50,
            heads: 1,
            blocks: 1,
            max_len: 50,
            learning_rate: 0.001,
            dropout: 0.2,
            batch_size: 128,
            epochs: 200,
            alpha: None,
            beta: 1.1,
            seed: 42,
            use_context: true,
            plain_block: false,
            eval_target_behavior_only: true,
            validation_split: false,
            primary_behavior: 0,
            grad_clip: None,
            checkpoint_every: None,
        }
    }
}

impl Hyperparams {
    /// The α vector for `k` behaviors, validated.
    pub fn alpha_for(&self, k: usize) -> Result<Vec<f64>> {
        let alpha = self.alpha.clone().unwrap_or_else(|| vec![1.0; k]);
        if alpha.len() != k {
            return Err(CasmError::Config(format!(
                "alpha: expected {k} weights (one per behavior), got {}",
                alpha.len()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(CasmError::Config(format!("alpha: weight {a} outside [0, 1]")));
        }
        Ok(alpha)
    }

    pub fn validate(&self, num_behaviors: usize) -> Result<()> {
        self.alpha_for(num_behaviors)?;
        let fail = |key: &str, msg: String| Err(CasmError::Config(format!("{key}: {msg}")));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail("beta", format!("must be a non-negative number, got {}", self.beta));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout", format!("must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("lr", format!("must be non-negative, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be positive".into());
        }
        if self.primary_behavior >= num_behaviors {
            return fail(
                "primary_behavior",
                format!("{} not below behavior count {num_behaviors}", self.primary_behavior),
            );
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return fail("grad_clip", format!("must be positive, got {c}"));
            }
        }
        Ok(())
    }

    pub fn model_config(&self, num_items: usize, num_behaviors: usize) -> ModelConfig {
        ModelConfig {
            num_items,
            num_behaviors,
            dim: self.dim,
            heads: self.heads,
            blocks: self.blocks,
            max_len: self.max_len,
            use_context: self.use_context,
            plain_block: self.plain_block,
        }
    }
}
