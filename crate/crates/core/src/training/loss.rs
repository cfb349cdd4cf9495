use crate::data::SequenceBatch;
use crate::error::{CasmError, Result};
use crate::model::ForwardOutput;
use crate::numerics::{Real, Tape, Var, LOG_CLAMP};

/// Per-step weights: `α_{b(t)} / N` on positives and `β / N` on negatives at
/// unmasked steps, zero elsewhere, where `N` is the unmasked count.
pub fn loss_weights<T: Real>(batch: &SequenceBatch, alpha: &[f64], beta: f64) -> Result<(Vec<T>, Vec<T>)> {
    let n = batch.num_valid();
    let scale = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let mut pos = Vec::with_capacity(batch.mask.len());
    let mut neg = Vec::with_capacity(batch.mask.len());
    for (i, &m) in batch.mask.iter().enumerate() {
        if m {
            let b = batch.pos_behaviors[i];
            let a = *alpha.get(b).ok_or_else(|| {
                CasmError::Config(format!("alpha: no weight for behavior {b} ({} given)", alpha.len()))
            })?;
            pos.push(T::of(a * scale));
            neg.push(T::of(beta * scale));
        } else {
            pos.push(T::zero());
            neg.push(T::zero());
        }
    }
    Ok((pos, neg))
}

/// Batch-mean weighted binary cross-entropy on the tape.
pub fn weighted_bce_loss<T: Real>(
    tape: &mut Tape<'_, T>,
    out: &ForwardOutput,
    batch: &SequenceBatch,
    alpha: &[f64],
    beta: f64,
) -> Result<Var> {
    let (pos_w, neg_w) = loss_weights(batch, alpha, beta)?;
    tape.weighted_bce(out.pos_logits, out.neg_logits, pos_w, neg_w)
}

/// Loss evaluated on probabilities rather than logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// `−Σ [α_b ln pos + β ln(1 − neg)]` over unmasked steps.
    pub total: f64,
    pub count: usize,
}

impl LossValue {
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total / self.count as f64
        }
    }
}

/// Reference form of the objective on scores in (0, 1), logs clamped at `1e-24`.
pub fn weighted_bce_value(
    pos_scores: &[f64],
    neg_scores: &[f64],
    pos_behaviors: &[usize],
    mask: &[bool],
    alpha: &[f64],
    beta: f64,
) -> Result<LossValue> {
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..mask.len() {
        if !mask[i] {
            continue;
        }
        let (p, q) = (pos_scores[i], neg_scores[i]);
        if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
            return Err(CasmError::Numerical(format!("score outside (0, 1) at step {i}: pos {p}, neg {q}")));
        }
        let a = alpha[pos_behaviors[i]];
        total -= a * p.max(LOG_CLAMP).ln() + beta * (1.0 - q).max(LOG_CLAMP).ln();
        count += 1;
    }
    Ok(LossValue { total, count })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_half_example() {
        let v = weighted_bce_value(&[0.5], &[0.5], &[0], &[true], &[1.0], 1.0).unwrap();
        assert!((v.total - 1.3862943611198906).abs() < 1e-15);
    }

    #[test]
    fn zero_alpha_drops_positive_term() {
        let v = weighted_bce_value(&[0.3], &[0.4], &[1], &[true], &[1.0, 0.0], 1.5).unwrap();
        assert!((v.total + 1.5 * 0.6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_saturated_scores() {
        assert!(matches!(
            weighted_bce_value(&[1.0], &[0.5], &[0], &[true], &[1.0], 1.0),
            Err(CasmError::Numerical(_))
        ));
    }
}
