//! Seconds per training batch across sequence lengths.
//!
//! `cargo run --release --example bench_scaling -- 20,50,100`

use casm::app::{bench_lengths, render_bench_table, Command, RunConfig};

fn main() -> casm::Result<()> {
    let mut cfg = RunConfig::defaults(Command::Bench);
    if let Some(arg) = std::env::args().nth(1) {
        cfg.set("bench_lengths", &arg)?;
    }
    let rows = bench_lengths(&cfg)?;
    print!("{}", render_bench_table(&rows));
    let (first, last) = (rows.first().unwrap(), rows.last().unwrap());
    println!(
        "time({})/time({}) = {:.1}",
        last.seq_len,
        first.seq_len,
        last.seconds_per_batch / first.seconds_per_batch
    );
    Ok(())
}
