use std::path::PathBuf;
use std::process::ExitCode;

use casm::app::{self, Command, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "casm", version, about = "Context-aware sequential multi-behavior recommender")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train on the leave-one-out training split and save a checkpoint.
    Train(Common),
    /// Rank held-out items with a saved checkpoint.
    Eval(Common),
    /// Train and evaluate one model per grid cell (α rows or context on/off).
    Ablate(Common),
    /// Time training steps across sequence lengths.
    Bench(Common),
    /// Print dataset statistics.
    InspectData(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset preset: taobao, tianchi, yelp or movielens.
    #[arg(long)]
    preset: Option<String>,
    /// Interaction file, or synthetic:aux / synthetic:cyclic / synthetic:random[:seed].
    #[arg(long)]
    data: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated per-behavior weights.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    /// Disable behavior embeddings and fusion.
    #[arg(long)]
    no_context: bool,
    /// Attention blocks without residuals, layer norm or dropout.
    #[arg(long)]
    plain_block: bool,
    /// Worker threads for evaluation and data preparation.
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated sequence lengths for `bench`.
    #[arg(long)]
    lengths: Option<String>,
    /// Checkpoint to read (`eval`) or write (`train`); defaults to `<out>/model.ckpt`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, casm::CasmError> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        if let Some(v) = &self.preset {
            push("preset", v.clone());
        }
        if let Some(v) = &self.data {
            push("data", v.clone());
        }
        if let Some(v) = &self.out {
            push("out", v.display().to_string());
        }
        if let Some(v) = self.seed {
            push("seed", v.to_string());
        }
        if let Some(v) = &self.alpha {
            push("alpha", v.clone());
        }
        if let Some(v) = self.beta {
            push("beta", v.to_string());
        }
        if self.no_context {
            push("use_context", "false".into());
        }
        if self.plain_block {
            push("plain_block", "true".into());
        }
        if let Some(v) = self.threads {
            push("threads", v.to_string());
        }
        if let Some(v) = &self.lengths {
            push("bench_lengths", v.clone());
        }
        if let Some(v) = &self.checkpoint {
            push("checkpoint", v.display().to_string());
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| casm::CasmError::Config(format!("--set expects key=value, got `{s}`")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

fn run(command: Command, args: &Common) -> casm::Result<String> {
    let cfg: RunConfig = app::parse_config(command, args.config.as_deref(), &args.overrides()?)?;
    app::with_threads(&cfg, || -> casm::Result<String> {
        Ok(match command {
            Command::Train => app::run_train(&cfg)?.summary,
            Command::Eval => app::run_eval(&cfg)?.summary,
            Command::Ablate => app::run_ablation(&cfg)?.render(),
            Command::Bench => app::render_bench_table(&app::run_bench(&cfg)?),
            Command::InspectData => app::run_inspect(&cfg)?.render(),
        })
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Train(a) => (Command::Train, a),
        Cmd::Eval(a) => (Command::Eval, a),
        Cmd::Ablate(a) => (Command::Ablate, a),
        Cmd::Bench(a) => (Command::Bench, a),
        Cmd::InspectData(a) => (Command::InspectData, a),
    };
    match run(command, args) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("casm {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
