//! Synthetic interaction logs for tests, examples and the scaled-down experiments.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::log::{Interaction, InteractionLog};
use crate::rng::{stream_rng, Stream};

/// Users with uniformly random histories of length `min_len..=max_len`.
pub fn random_log(
    num_users: usize,
    num_items: usize,
    num_behaviors: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> InteractionLog {
    let mut rng = stream_rng(seed, Stream::Synthetic, &[0]);
    let mut out = Vec::new();
    for user in 1..=num_users as u64 {
        let len = rng.gen_range(min_len..=max_len);
        for t in 0..len {
            out.push(Interaction {
                user_id: user,
                item_id: rng.gen_range(1..=num_items),
                behavior: rng.gen_range(0..num_behaviors),
                timestamp: t as u64 * 10 + rng.gen_range(0..10),
            });
        }
    }
    InteractionLog::from_interactions(out, Some(num_items), Some(num_behaviors)).expect("valid synthetic log")
}

/// Every user walks the cycle `1 → 2 → … → num_items → 1` from a random start,
/// with behavior `item % 2`. The next item is a deterministic function of the
/// current one, so the log is perfectly memorisable.
pub fn cyclic_log(num_users: usize, num_items: usize, min_len: usize, max_len: usize, seed: u64) -> InteractionLog {
    let mut rng = stream_rng(seed, Stream::Synthetic, &[1]);
    let mut out = Vec::new();
    for user in 1..=num_users as u64 {
        let len = rng.gen_range(min_len..=max_len);
        let mut item = rng.gen_range(1..=num_items);
        for t in 0..len {
            out.push(Interaction { user_id: user, item_id: item, behavior: item % 2, timestamp: t as u64 });
            item = item % num_items + 1;
        }
    }
    InteractionLog::from_interactions(out, Some(num_items), Some(2)).expect("valid synthetic log")
}

/// Behavior ids used by [`auxiliary_signal_log`].
pub const BUY: usize = 0;
pub const CART: usize = 1;
pub const FAV: usize = 2;
pub const VIEW: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct AuxSignalConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Purchase sessions per user (inclusive range).
    pub sessions: (usize, usize),
    /// Auxiliary events before each purchase (inclusive range).
    pub aux_per_session: (usize, usize),
    /// Probability that an event follows the item successor rule.
    pub follow_prob: f64,
}

impl Default for AuxSignalConfig {
    fn default() -> Self {
        Self { num_users: 200, num_items: 400, sessions: (2, 4), aux_per_session: (3, 5), follow_prob: 0.9 }
    }
}

/// Multi-behavior log where auxiliary events predict the next purchase.
///
/// Items are linked by a hidden random successor permutation. Each user walks
/// it: a few view/cart/favorite events, then a buy, repeated per session, so
/// every transition (auxiliary or purchase) is drawn from the same successor
/// rule. Purchases are sparse, so a model that learns from auxiliary targets
/// sees many more examples of the rule than one trained on purchases alone.
/// Every history ends with a buy. Behaviors: buy=0, cart=1, fav=2, view=3.
pub fn auxiliary_signal_log(config: &AuxSignalConfig, seed: u64) -> InteractionLog {
    let mut rng = stream_rng(seed, Stream::Synthetic, &[2]);
    let mut successor: Vec<usize> = (1..=config.num_items).collect();
    successor.shuffle(&mut rng);
    let mut out = Vec::new();
    for user in 1..=config.num_users as u64 {
        let mut item = rng.gen_range(1..=config.num_items);
        let mut t = 0u64;
        let sessions = rng.gen_range(config.sessions.0..=config.sessions.1);
        for _ in 0..sessions {
            let aux = rng.gen_range(config.aux_per_session.0..=config.aux_per_session.1);
            for step in 0..=aux {
                let behavior = if step == aux {
                    BUY
                } else {
                    match rng.gen_range(0..10) {
                        0 => CART,
                        1 => FAV,
                        _ => VIEW,
                    }
                };
                out.push(Interaction { user_id: user, item_id: item, behavior, timestamp: t });
                t += 1;
                item = if rng.gen_bool(config.follow_prob) {
                    successor[item - 1]
                } else {
                    rng.gen_range(1..=config.num_items)
                };
            }
        }
    }
    let mut log = InteractionLog::from_interactions(out, Some(config.num_items), Some(4)).expect("valid synthetic log");
    log.set_behavior_names(vec!["buy".into(), "cart".into(), "fav".into(), "view".into()])
        .expect("four names");
    log
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_log_follows_rule() {
        let log = cyclic_log(50, 20, 6, 12, 3);
        assert_eq!(log.num_users(), 50);
        for u in log.users() {
            for w in u.events.windows(2) {
                assert_eq!(w[1].item, w[0].item % 20 + 1);
            }
        }
    }

    #[test]
    fn aux_log_ends_with_buys() {
        let log = auxiliary_signal_log(&AuxSignalConfig::default(), 1);
        assert!(log.users().iter().all(|u| u.events.last().unwrap().behavior == BUY));
        let counts = log.behavior_counts();
        assert!(counts[VIEW] > counts[BUY]);
        assert_eq!(log.behavior_names()[0], "buy");
    }
}
