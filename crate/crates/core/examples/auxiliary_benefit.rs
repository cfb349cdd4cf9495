//! Compares buy-only training against auxiliary-weighted training on a log
//! where views, carts and favorites follow the same successor rule as buys.

use casm::data::synthetic::{auxiliary_signal_log, AuxSignalConfig, BUY};
use casm::data::{build_eval_instances, leave_one_out_split, SplitOptions};
use casm::eval::evaluate;
use casm::training::{train, Hyperparams, TrainOptions};

fn main() -> casm::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let log = auxiliary_signal_log(&AuxSignalConfig::default(), 7);
    let split = leave_one_out_split(&log, &SplitOptions::default())?;
    println!("{} users, {} interactions, {} test users", log.num_users(), log.num_interactions(), split.test.len());
    let rows = [vec![1.0, 0.0, 0.0, 0.0], vec![0.7, 0.1, 0.1, 0.1]];
    for alpha in rows {
        let mut hrs = Vec::new();
        for seed in 1..=3u64 {
            let hp = Hyperparams {
                dim: 32,
                heads: 1,
                max_len: 30,
                learning_rate: 0.005,
                dropout: 0.2,
                batch_size: 32,
                epochs,
                alpha: Some(alpha.clone()),
                seed,
                ..Hyperparams::default()
            };
            let out = train::<f32>(&split.train, &hp, TrainOptions { exclude: Some(&log), ..TrainOptions::default() })?;
            let instances = build_eval_instances(&split.test, &log, hp.max_len, BUY, seed)?;
            hrs.push(evaluate(&out.params, &instances, seed)?.hr(10));
        }
        let mean = hrs.iter().sum::<f64>() / hrs.len() as f64;
        println!("alpha {alpha:?}: HR@10 per seed {hrs:.3?}, mean {mean:.4}");
    }
    Ok(())
}
