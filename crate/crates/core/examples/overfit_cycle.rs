//! Memorises a deterministic next-item rule and reports training-target HR@1.

use casm::data::synthetic::cyclic_log;
use casm::data::left_pad;
use casm::eval::rank_of_positive;
use casm::model::score_candidates;
use casm::training::{train, Hyperparams, TrainOptions};

fn main() -> casm::Result<()> {
    let log = cyclic_log(50, 20, 6, 12, 1);
    let hp = Hyperparams {
        dim: 32,
        heads: 1,
        max_len: 12,
        learning_rate: 0.01,
        dropout: 0.0,
        batch_size: 16,
        epochs: 200,
        ..Hyperparams::default()
    };
    let start = std::time::Instant::now();
    let out = train::<f32>(&log, &hp, TrainOptions::default())?;
    let first = out.epochs.first().unwrap().mean_loss;
    let last = out.epochs.last().unwrap().mean_loss;
    let mut hits = 0;
    for user in log.users() {
        let (last_event, history) = user.events.split_last().unwrap();
        let (items, behaviors) = left_pad(history, hp.max_len);
        // The target against every item outside the user's history, as in the ranking protocol.
        let seen: Vec<usize> = user.items().collect();
        let mut candidates = vec![last_event.item];
        candidates.extend((1..=20).filter(|i| !seen.contains(i)));
        let scores = score_candidates(&out.params, &[(&items, &behaviors)], &[&candidates], last_event.behavior)?;
        if rank_of_positive(scores.row(0), 0) == 1 {
            hits += 1;
        }
    }
    println!("loss {first:.4} -> {last:.4} (ratio {:.3})", last / first);
    println!("training-target HR@1 = {:.3}", hits as f64 / log.num_users() as f64);
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
