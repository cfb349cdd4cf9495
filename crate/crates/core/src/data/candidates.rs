//! Leave-one-out evaluation instances with 99 sampled negatives.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;

use super::log::InteractionLog;
use super::sequences::{left_pad, sample_negative};
use super::split::HeldOut;
use crate::error::{CasmError, Result};
use crate::rng::{stream_rng, Rng, Stream};

pub const NUM_EVAL_NEGATIVES: usize = 99;

/// Randomly ordered candidate list with the positive's position recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidates {
    pub items: Vec<usize>,
    pub positive_index: usize,
}

/// Draws `num_negatives` distinct items uniformly from `[1, num_items]`
/// excluding `history` and `positive`, then shuffles them together with the
/// positive.
pub fn sample_eval_candidates(
    user_id: u64,
    history: &HashSet<usize>,
    positive: usize,
    num_items: usize,
    num_negatives: usize,
    rng: &mut Rng,
) -> Result<Candidates> {
    let mut excluded: HashSet<usize> = history.iter().copied().filter(|i| (1..=num_items).contains(i)).collect();
    excluded.insert(positive);
    let available = num_items.saturating_sub(excluded.len());
    if available < num_negatives {
        return Err(CasmError::Protocol(format!(
            "user {user_id}: only {available} items outside the history, {num_negatives} negatives required"
        )));
    }
    let mut items = Vec::with_capacity(num_negatives + 1);
    items.push(positive);
    if available >= 2 * num_negatives {
        let mut drawn = excluded;
        while items.len() <= num_negatives {
            let n = sample_negative(rng, num_items, &drawn);
            drawn.insert(n);
            items.push(n);
        }
    } else {
        let pool: Vec<usize> = (1..=num_items).filter(|i| !excluded.contains(i)).collect();
        items.extend(sample(rng, pool.len(), num_negatives).into_iter().map(|i| pool[i]));
    }
    items.shuffle(rng);
    let positive_index = items.iter().position(|&i| i == positive).expect("positive is present");
    Ok(Candidates { items, positive_index })
}

/// Everything needed to rank one user's held-out item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalInstance {
    pub user_id: u64,
    /// Left-padded history before the held-out interaction.
    pub input_items: Vec<usize>,
    pub input_behaviors: Vec<usize>,
    pub positive: usize,
    /// Behavior the candidates are scored under.
    pub target_behavior: usize,
    pub candidates: Vec<usize>,
    pub positive_index: usize,
    /// Number of primary-behavior interactions in the user's input history.
    pub primary_count: usize,
}

/// Builds one instance per held-out record. Negatives exclude the user's full
/// history in `full_log`; each user's generator is seeded by `(seed, user_id)`.
pub fn build_eval_instances(
    held_out: &[HeldOut],
    full_log: &InteractionLog,
    max_len: usize,
    target_behavior: usize,
    seed: u64,
) -> Result<Vec<EvalInstance>> {
    if target_behavior >= full_log.num_behaviors() {
        return Err(CasmError::Config(format!(
            "target behavior {target_behavior} not below behavior count {}",
            full_log.num_behaviors()
        )));
    }
    held_out
        .iter()
        .map(|h| {
            let mut history: HashSet<usize> = h.history.iter().map(|e| e.item).collect();
            if let Some(full) = full_log.user(h.user_id) {
                history.extend(full.items());
            }
            let mut rng = stream_rng(seed, Stream::Candidates, &[h.user_id]);
            let cands = sample_eval_candidates(
                h.user_id,
                &history,
                h.item,
                full_log.num_items(),
                NUM_EVAL_NEGATIVES,
                &mut rng,
            )?;
            let (input_items, input_behaviors) = left_pad(&h.history, max_len);
            Ok(EvalInstance {
                user_id: h.user_id,
                input_items,
                input_behaviors,
                positive: h.item,
                target_behavior,
                candidates: cands.items,
                positive_index: cands.positive_index,
                primary_count: h.history.iter().filter(|e| e.behavior == target_behavior).count(),
            })
        })
        .collect()
}
