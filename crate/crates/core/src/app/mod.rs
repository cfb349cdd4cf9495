//! Run configuration and the command implementations behind the `casm` binary.

pub mod ablation;
pub mod bench;
pub mod config;
pub mod pipeline;

pub use ablation::{alpha_grid, context_grid, run_ablation, run_ablation_on, AblationCell, AblationRow, AblationTable};
pub use bench::{bench_lengths, render_bench_table, run_bench, write_bench_csv, BenchRow};
pub use config::{parse_config, parse_config_text, preset, AblationKind, BenchSettings, Command, RunConfig, PRESETS};
pub use pipeline::{
    evaluate_seeds, load_dataset, run_eval, run_experiment, run_inspect, run_train, split_log, summarize, train_split,
    with_threads, write_eval_outputs, write_run_header, DataSummary, Dataset, EvalReport, TrainReport, CODE_VERSION,
};
