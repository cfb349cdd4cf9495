//! Padded training sequences with right-shifted targets and sampled negatives.

use std::collections::HashSet;
use std::sync::mpsc;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::log::{Event, InteractionLog};
use crate::error::{CasmError, Result};
use crate::rng::{stream_rng, Rng, Stream};

/// `[batch, max_len]` row-major id tensors plus the validity mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceBatch {
    pub batch_size: usize,
    pub max_len: usize,
    pub user_ids: Vec<u64>,
    pub input_items: Vec<usize>,
    pub input_behaviors: Vec<usize>,
    pub pos_items: Vec<usize>,
    pub pos_behaviors: Vec<usize>,
    pub neg_items: Vec<usize>,
    /// `true` where both the input and the positive target are real items.
    pub mask: Vec<bool>,
}

impl SequenceBatch {
    pub fn num_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub(crate) fn from_rows(rows: Vec<SequenceRow>, max_len: usize) -> Self {
        let mut batch = SequenceBatch {
            batch_size: rows.len(),
            max_len,
            user_ids: Vec::with_capacity(rows.len()),
            input_items: Vec::with_capacity(rows.len() * max_len),
            input_behaviors: Vec::with_capacity(rows.len() * max_len),
            pos_items: Vec::with_capacity(rows.len() * max_len),
            pos_behaviors: Vec::with_capacity(rows.len() * max_len),
            neg_items: Vec::with_capacity(rows.len() * max_len),
            mask: Vec::with_capacity(rows.len() * max_len),
        };
        for row in rows {
            batch.user_ids.push(row.user_id);
            batch.input_items.extend(row.input_items);
            batch.input_behaviors.extend(row.input_behaviors);
            batch.pos_items.extend(row.pos_items);
            batch.pos_behaviors.extend(row.pos_behaviors);
            batch.neg_items.extend(row.neg_items);
            batch.mask.extend(row.mask);
        }
        batch
    }
}

/// One user's padded training row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceRow {
    pub user_id: u64,
    pub input_items: Vec<usize>,
    pub input_behaviors: Vec<usize>,
    pub pos_items: Vec<usize>,
    pub pos_behaviors: Vec<usize>,
    pub neg_items: Vec<usize>,
    pub mask: Vec<bool>,
}

/// Left-pads `events` (most recent `max_len`) into item and behavior rows.
pub fn left_pad(events: &[Event], max_len: usize) -> (Vec<usize>, Vec<usize>) {
    let kept = &events[events.len().saturating_sub(max_len)..];
    let pad = max_len - kept.len();
    let mut items = vec![0; pad];
    let mut behaviors = vec![0; pad];
    items.extend(kept.iter().map(|e| e.item));
    behaviors.extend(kept.iter().map(|e| e.behavior));
    (items, behaviors)
}

/// Uniform draw from `[1, num_items]` outside `excluded`.
pub fn sample_negative(rng: &mut Rng, num_items: usize, excluded: &HashSet<usize>) -> usize {
    loop {
        let item = rng.gen_range(1..=num_items);
        if !excluded.contains(&item) {
            return item;
        }
    }
}

/// Builds one user's row: inputs are the history without its last event,
/// targets the history shifted by one. Returns `None` when no position is
/// valid (histories shorter than two events).
pub fn build_row(
    user_id: u64,
    events: &[Event],
    max_len: usize,
    num_items: usize,
    excluded: &HashSet<usize>,
    rng: &mut Rng,
) -> Result<Option<SequenceRow>> {
    if events.len() < 2 {
        return Ok(None);
    }
    if excluded.iter().filter(|&&i| (1..=num_items).contains(&i)).count() >= num_items {
        return Err(CasmError::Protocol(format!(
            "user {user_id}: history covers every item, no negative can be sampled"
        )));
    }
    let n = events.len();
    let (input_items, input_behaviors) = left_pad(&events[..n - 1], max_len);
    let (pos_items, pos_behaviors) = left_pad(&events[1..], max_len);
    let mask: Vec<bool> = input_items.iter().zip(&pos_items).map(|(&i, &p)| i != 0 && p != 0).collect();
    let neg_items = mask
        .iter()
        .map(|&m| if m { sample_negative(rng, num_items, excluded) } else { 0 })
        .collect();
    Ok(Some(SequenceRow { user_id, input_items, input_behaviors, pos_items, pos_behaviors, neg_items, mask }))
}

/// Produces the per-epoch batch stream for a training log.
///
/// User order is reshuffled every epoch and negatives are redrawn from a
/// generator seeded by `(seed, epoch, user_id)`, so the stream depends only on
/// the run seed.
pub struct SequenceBuilder<'a> {
    log: &'a InteractionLog,
    max_len: usize,
    batch_size: usize,
    seed: u64,
    exclusions: Vec<HashSet<usize>>,
}

impl<'a> SequenceBuilder<'a> {
    pub fn new(log: &'a InteractionLog, max_len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if max_len < 2 {
            return Err(CasmError::Config(format!("max_len must be at least 2, got {max_len}")));
        }
        if batch_size == 0 {
            return Err(CasmError::Config("batch_size must be positive".into()));
        }
        let exclusions = log.users().iter().map(|u| u.items().collect()).collect();
        Ok(Self { log, max_len, batch_size, seed, exclusions })
    }

    /// Replaces the per-user exclusion sets with the histories in `full`
    /// (e.g. the unsplit log), keeping the training-log items as well.
    pub fn exclude_from(mut self, full: &InteractionLog) -> Self {
        for (user, set) in self.log.users().iter().zip(self.exclusions.iter_mut()) {
            if let Some(h) = full.user(user.user_id) {
                set.extend(h.items());
            }
        }
        self
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    fn user_order(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.log.num_users()).collect();
        order.shuffle(&mut stream_rng(self.seed, Stream::Shuffle, &[epoch]));
        order
    }

    fn row(&self, epoch: u64, idx: usize) -> Result<Option<SequenceRow>> {
        let user = &self.log.users()[idx];
        let mut rng = stream_rng(self.seed, Stream::Negatives, &[epoch, user.user_id]);
        build_row(user.user_id, &user.events, self.max_len, self.log.num_items(), &self.exclusions[idx], &mut rng)
    }

    /// All batches of one epoch, in order.
    pub fn epoch_batches(&self, epoch: u64) -> Result<Vec<SequenceBatch>> {
        let mut out = Vec::new();
        self.for_each_batch(epoch, 0, |b| {
            out.push(b);
            Ok(())
        })?;
        Ok(out)
    }

    /// Streams one epoch's batches into `consume`. With `prefetch > 0` the
    /// batches are built on a separate thread and handed over through a
    /// bounded queue of that capacity; the stream is identical either way.
    pub fn for_each_batch(
        &self,
        epoch: u64,
        prefetch: usize,
        mut consume: impl FnMut(SequenceBatch) -> Result<()>,
    ) -> Result<()> {
        if prefetch == 0 {
            return self.produce(epoch, |b| consume(b).map(|_| true));
        }
        std::thread::scope(|scope| {
            let (tx, rx) = mpsc::sync_channel::<SequenceBatch>(prefetch);
            let producer = scope.spawn(move || self.produce(epoch, |b| Ok(tx.send(b).is_ok())));
            let mut result = Ok(());
            for batch in rx.iter() {
                if let Err(e) = consume(batch) {
                    result = Err(e);
                    break;
                }
            }
            drop(rx);
            let produced = producer.join().expect("batch producer panicked");
            result.and(produced)
        })
    }

    /// Emits batches until `emit` returns `Ok(false)` or the epoch ends.
    fn produce(&self, epoch: u64, mut emit: impl FnMut(SequenceBatch) -> Result<bool>) -> Result<()> {
        let mut rows = Vec::with_capacity(self.batch_size);
        for idx in self.user_order(epoch) {
            if let Some(row) = self.row(epoch, idx)? {
                rows.push(row);
            }
            if rows.len() == self.batch_size
                && !emit(SequenceBatch::from_rows(std::mem::take(&mut rows), self.max_len))?
            {
                return Ok(());
            }
        }
        if !rows.is_empty() {
            emit(SequenceBatch::from_rows(rows, self.max_len))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::log::Interaction;
    use crate::data::synthetic::random_log;
    use proptest::prelude::*;

    fn events(pairs: &[(usize, usize)]) -> Vec<Event> {
        pairs
            .iter()
            .enumerate()
            .map(|(t, &(item, behavior))| Event { item, behavior, timestamp: t as u64 })
            .collect()
    }

    #[test]
    fn worked_example() {
        let ev = events(&[(5, 1), (7, 2), (9, 1)]);
        let excluded: HashSet<usize> = [5, 7, 9].into();
        let mut rng = stream_rng(0, Stream::Negatives, &[]);
        let row = build_row(1, &ev, 4, 20, &excluded, &mut rng).unwrap().unwrap();
        assert_eq!(row.input_items, vec![0, 0, 5, 7]);
        assert_eq!(row.input_behaviors, vec![0, 0, 1, 2]);
        assert_eq!(row.pos_items, vec![0, 0, 7, 9]);
        assert_eq!(row.pos_behaviors, vec![0, 0, 2, 1]);
        assert_eq!(row.mask, vec![false, false, true, true]);
        assert_eq!(row.neg_items[..2], [0, 0]);
        assert!(row.neg_items[2..].iter().all(|n| !excluded.contains(n) && *n >= 1));
    }

    #[test]
    fn truncation_keeps_most_recent() {
        let ev = events(&(1..=10).map(|i| (i, 0)).collect::<Vec<_>>());
        let excluded: HashSet<usize> = (1..=10).collect();
        let mut rng = stream_rng(0, Stream::Negatives, &[]);
        let row = build_row(1, &ev, 4, 50, &excluded, &mut rng).unwrap().unwrap();
        assert_eq!(row.input_items, vec![6, 7, 8, 9]);
        assert_eq!(row.pos_items, vec![7, 8, 9, 10]);
    }

    #[test]
    fn single_event_user_is_dropped() {
        let mut rng = stream_rng(0, Stream::Negatives, &[]);
        assert!(build_row(1, &events(&[(3, 0)]), 4, 10, &HashSet::new(), &mut rng).unwrap().is_none());
    }

    #[test]
    fn negatives_never_hit_history() {
        let excluded: HashSet<usize> = (1..=50).collect();
        let mut rng = stream_rng(3, Stream::Negatives, &[]);
        for _ in 0..1000 {
            let n = sample_negative(&mut rng, 1000, &excluded);
            assert!((51..=1000).contains(&n));
        }
    }

    #[test]
    fn exhausted_item_space_is_a_protocol_error() {
        let ev = events(&[(1, 0), (2, 0)]);
        let excluded: HashSet<usize> = [1, 2].into();
        let mut rng = stream_rng(0, Stream::Negatives, &[]);
        assert!(matches!(build_row(1, &ev, 4, 2, &excluded, &mut rng), Err(CasmError::Protocol(_))));
    }

    #[test]
    fn short_max_len_is_rejected() {
        let log = random_log(3, 10, 2, 2, 4, 0);
        assert!(SequenceBuilder::new(&log, 1, 2, 0).is_err());
    }

    #[test]
    fn prefetch_does_not_change_stream() {
        let log = random_log(40, 80, 3, 1, 15, 9);
        let builder = SequenceBuilder::new(&log, 8, 7, 5).unwrap();
        let direct = builder.epoch_batches(2).unwrap();
        let mut threaded = Vec::new();
        builder
            .for_each_batch(2, 2, |b| {
                threaded.push(b);
                Ok(())
            })
            .unwrap();
        assert_eq!(direct, threaded);
        assert_ne!(direct, builder.epoch_batches(3).unwrap());
    }

    #[test]
    fn exclude_from_adds_held_out_items() {
        let full = InteractionLog::from_interactions(
            vec![
                Interaction { user_id: 1, item_id: 1, behavior: 0, timestamp: 0 },
                Interaction { user_id: 1, item_id: 2, behavior: 0, timestamp: 1 },
                Interaction { user_id: 1, item_id: 3, behavior: 0, timestamp: 2 },
            ],
            Some(4),
            None,
        )
        .unwrap();
        let train = InteractionLog::from_interactions(
            vec![
                Interaction { user_id: 1, item_id: 1, behavior: 0, timestamp: 0 },
                Interaction { user_id: 1, item_id: 2, behavior: 0, timestamp: 1 },
            ],
            Some(4),
            None,
        )
        .unwrap();
        let builder = SequenceBuilder::new(&train, 3, 1, 0).unwrap().exclude_from(&full);
        for epoch in 0..20 {
            let b = &builder.epoch_batches(epoch).unwrap()[0];
            assert_eq!(b.neg_items[2], 4);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn batch_invariants_hold(users in 1usize..25, items in 30usize..80, k in 1usize..4,
                                 max_len in 2usize..9, batch in 1usize..6, seed in 0u64..500) {
            let log = random_log(users, items, k, 1, 12, seed);
            let builder = SequenceBuilder::new(&log, max_len, batch, seed).unwrap();
            let batches = builder.epoch_batches(seed % 3).unwrap();
            let mut seen_users = 0;
            for b in &batches {
                prop_assert!(b.batch_size <= batch);
                for r in 0..b.batch_size {
                    seen_users += 1;
                    let hist = log.user(b.user_ids[r]).unwrap();
                    let hist_items: HashSet<usize> = hist.items().collect();
                    let span = r * max_len..(r + 1) * max_len;
                    for t in span.clone() {
                        let padded = b.input_items[t] == 0 || b.pos_items[t] == 0;
                        prop_assert_eq!(b.mask[t], !padded);
                        if b.mask[t] {
                            prop_assert!(b.neg_items[t] >= 1 && !hist_items.contains(&b.neg_items[t]));
                        } else {
                            prop_assert_eq!(b.neg_items[t], 0);
                        }
                    }
                    // positives are the inputs shifted left with the final event appended
                    let ev = &hist.events;
                    prop_assert_eq!(b.pos_items[span.end - 1], ev[ev.len() - 1].item);
                    prop_assert_eq!(b.input_items[span.end - 1], ev[ev.len() - 2].item);
                    for t in span.start..span.end - 1 {
                        if b.pos_items[t] != 0 {
                            prop_assert_eq!(b.pos_items[t], b.input_items[t + 1]);
                            prop_assert_eq!(b.pos_behaviors[t], b.input_behaviors[t + 1]);
                        }
                    }
                }
            }
            let eligible = log.users().iter().filter(|u| u.events.len() >= 2).count();
            prop_assert_eq!(seen_users, eligible);
            prop_assert_eq!(batches, builder.epoch_batches(seed % 3).unwrap());
        }
    }
}
