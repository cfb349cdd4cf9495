use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::time::Instant;

use super::config::RunConfig;
use super::pipeline::write_run_header;
use crate::data::synthetic::random_log;
use crate::data::SequenceBuilder;
use crate::error::Result;
use crate::model::{Dropout, ModelParams, Mode};
use crate::rng::{stream_rng, Stream};
use crate::training::batch_loss_and_grads;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub seq_len: usize,
    pub seconds_per_batch: f64,
}

/// Mean wall time of one training step (forward, loss and backward) at every
/// configured sequence length, on full-length synthetic sequences.
pub fn bench_lengths(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    let hp = &cfg.hp;
    let b = &cfg.bench;
    let mut rows = Vec::with_capacity(b.lengths.len());
    for &len in &b.lengths {
        let log = random_log(hp.batch_size, b.num_items, b.num_behaviors, len + 1, len + 1, hp.seed);
        let batch = SequenceBuilder::new(&log, len, hp.batch_size, hp.seed)?.epoch_batches(1)?.remove(0);
        let mut model_hp = hp.clone();
        model_hp.max_len = len;
        let params = ModelParams::<f32>::init(&model_hp.model_config(b.num_items, b.num_behaviors), hp.seed)?;
        let alpha = vec![1.0; b.num_behaviors];
        let step = |i: u64| -> Result<()> {
            let mut drop = Dropout { rate: hp.dropout, rng: stream_rng(hp.seed, Stream::Bench, &[len as u64, i]) };
            batch_loss_and_grads(&params, &batch, &alpha, hp.beta, &mut Mode::Train(&mut drop))?;
            Ok(())
        };
        for i in 0..b.warmup {
            step(i as u64)?;
        }
        let start = Instant::now();
        for i in 0..b.batches {
            step((b.warmup + i) as u64)?;
        }
        rows.push(BenchRow { seq_len: len, seconds_per_batch: start.elapsed().as_secs_f64() / b.batches as f64 });
    }
    Ok(rows)
}

/// CSV with columns `seq_len,seconds_per_batch`.
pub fn write_bench_csv(rows: &[BenchRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "seq_len,seconds_per_batch")?;
    for r in rows {
        writeln!(w, "{},{:.6}", r.seq_len, r.seconds_per_batch)?;
    }
    Ok(())
}

/// Two-row table: sequence lengths across, seconds per batch below.
pub fn render_bench_table(rows: &[BenchRow]) -> String {
    let mut head = format!("{:<16}", "Sequence length");
    let mut time = format!("{:<16}", "Time (s)");
    for r in rows {
        let _ = write!(head, "{:>9}", r.seq_len);
        let _ = write!(time, "{:>9.3}", r.seconds_per_batch);
    }
    format!("{head}\n{time}\n")
}

/// `bench`: writes `bench.csv` and `bench_table.txt`.
pub fn run_bench(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    write_run_header(cfg, None)?;
    let rows = bench_lengths(cfg)?;
    write_bench_csv(&rows, fs::File::create(cfg.out.join("bench.csv"))?)?;
    fs::write(cfg.out.join("bench_table.txt"), render_bench_table(&rows))?;
    Ok(rows)
}
