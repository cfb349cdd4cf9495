//! Breaks HR@10 / NDCG@10 down by how many primary interactions each test
//! user has, pooling several evaluation seeds.

use casm::data::synthetic::{auxiliary_signal_log, AuxSignalConfig, BUY};
use casm::data::{build_eval_instances, leave_one_out_split, SplitOptions};
use casm::eval::{evaluate, evaluate_stratified, EvalResult};
use casm::training::{train, Hyperparams, TrainOptions};

fn main() -> casm::Result<()> {
    let log = auxiliary_signal_log(&AuxSignalConfig::default(), 5);
    let split = leave_one_out_split(&log, &SplitOptions::default())?;
    let hp = Hyperparams {
        dim: 32,
        max_len: 30,
        learning_rate: 0.005,
        batch_size: 32,
        epochs: 20,
        alpha: Some(vec![0.7, 0.1, 0.1, 0.1]),
        ..Hyperparams::default()
    };
    let out = train::<f32>(&split.train, &hp, TrainOptions { exclude: Some(&log), ..TrainOptions::default() })?;
    let mut result = EvalResult::default();
    for seed in 0..3 {
        let instances = build_eval_instances(&split.test, &log, hp.max_len, BUY, seed)?;
        result.runs.push(evaluate(&out.params, &instances, seed)?);
    }
    let hr = result.hr(10);
    println!("HR@10 {:.4} ± {:.4} over {} seeds", hr.mean, hr.std, result.runs.len());
    for row in evaluate_stratified(&result, &[0, 2, 4, 8], 10) {
        println!("{:<10} {:>5} users  HR@10 {:.4}  NDCG@10 {:.4}", row.label(), row.users, row.hr, row.ndcg);
    }
    Ok(())
}
