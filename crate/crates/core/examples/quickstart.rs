//! Train on a synthetic multi-behavior log and report HR@10 / NDCG@10.

use casm::data::synthetic::{auxiliary_signal_log, AuxSignalConfig, BUY};
use casm::data::{build_eval_instances, leave_one_out_split, SplitOptions};
use casm::eval::evaluate;
use casm::training::{train, Hyperparams, TrainOptions};

fn main() -> casm::Result<()> {
    let log = auxiliary_signal_log(&AuxSignalConfig::default(), 1);
    let split = leave_one_out_split(&log, &SplitOptions::default())?;
    let hp = Hyperparams {
        dim: 32,
        max_len: 30,
        learning_rate: 0.005,
        batch_size: 32,
        epochs: 30,
        alpha: Some(vec![0.7, 0.1, 0.1, 0.1]),
        ..Hyperparams::default()
    };
    let options = TrainOptions {
        exclude: Some(&log),
        on_epoch: Some(Box::new(|e| {
            if e.epoch % 10 == 0 {
                println!("epoch {:>3}  loss {:.4}", e.epoch, e.mean_loss);
            }
        })),
        ..TrainOptions::default()
    };
    let out = train::<f32>(&split.train, &hp, options)?;
    let instances = build_eval_instances(&split.test, &log, hp.max_len, BUY, hp.seed)?;
    let run = evaluate(&out.params, &instances, hp.seed)?;
    println!("{} test users: HR@10 {:.4}, NDCG@10 {:.4}", instances.len(), run.hr(10), run.ndcg(10));
    Ok(())
}
