//! Saves a trained model, reloads it and checks the scores are unchanged.

use casm::data::synthetic::cyclic_log;
use casm::data::left_pad;
use casm::model::{score_candidates, Checkpoint};
use casm::training::{train, Hyperparams, TrainOptions};

fn main() -> casm::Result<()> {
    let log = cyclic_log(50, 20, 6, 12, 2);
    let hp = Hyperparams { dim: 16, max_len: 12, epochs: 5, batch_size: 16, ..Hyperparams::default() };
    let out = train::<f32>(&log, &hp, TrainOptions::default())?;

    let path = std::env::temp_dir().join("casm_example.ckpt");
    Checkpoint { params: out.params.clone(), meta: "example".into() }.save(&path)?;
    let loaded = Checkpoint::<f32>::load(&path)?;
    println!("{} bytes, meta `{}`", std::fs::metadata(&path)?.len(), loaded.meta);

    let user = &log.users()[0];
    let (items, behaviors) = left_pad(&user.events, hp.max_len);
    let candidates: Vec<usize> = (1..=20).collect();
    let before = score_candidates(&out.params, &[(&items, &behaviors)], &[&candidates], 0)?;
    let after = score_candidates(&loaded.params, &[(&items, &behaviors)], &[&candidates], 0)?;
    println!("scores identical after reload: {}", before == after);
    Ok(())
}
