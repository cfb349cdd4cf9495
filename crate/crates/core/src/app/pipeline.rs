use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::data::synthetic::{auxiliary_signal_log, cyclic_log, random_log, AuxSignalConfig};
use crate::data::{build_eval_instances, leave_one_out_split, InteractionLog, LoadOptions, Split, SplitOptions};
use crate::error::{CasmError, Result};
use crate::eval::{evaluate, evaluate_stratified, result::write_buckets_csv, EvalResult};
use crate::model::{Checkpoint, ModelParams};
use crate::training::{train, TrainOptions, TrainOutput};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// A loaded interaction log plus the checksum recorded with every run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub log: InteractionLog,
    pub sha256: String,
}

fn synthetic(source: &str) -> Result<InteractionLog> {
    let mut parts = source.split(':');
    let kind = parts.next().unwrap_or_default();
    let seed = match parts.next() {
        Some(s) => s.parse().map_err(|_| CasmError::Config(format!("data: bad synthetic seed `{s}`")))?,
        None => 1,
    };
    Ok(match kind {
        "aux" => auxiliary_signal_log(&AuxSignalConfig::default(), seed),
        "cyclic" => cyclic_log(50, 20, 6, 12, seed),
        "random" => random_log(100, 200, 4, 3, 30, seed),
        _ => {
            return Err(CasmError::Config(format!(
                "data: unknown synthetic generator `{kind}` (aux, cyclic, random)"
            )))
        }
    })
}

/// Reads `cfg.data`: a file path or `synthetic:<kind>[:seed]`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let data = cfg
        .data
        .as_deref()
        .ok_or_else(|| CasmError::Config("data: no dataset given (use --data)".into()))?;
    if let Some(source) = data.strip_prefix("synthetic:") {
        let log = synthetic(source)?;
        let mut bytes = Vec::new();
        log.write_to(&mut bytes)?;
        return Ok(Dataset { log, sha256: hex::encode(Sha256::digest(&bytes)) });
    }
    let bytes = fs::read(data).map_err(|e| CasmError::Io(std::io::Error::new(e.kind(), format!("{data}: {e}"))))?;
    let log = InteractionLog::load(data, &LoadOptions { behavior_names: cfg.behavior_names.clone() })?;
    Ok(Dataset { log, sha256: hex::encode(Sha256::digest(&bytes)) })
}

/// Creates the output directory and writes `run_config.txt`.
pub fn write_run_header(cfg: &RunConfig, data_sha256: Option<&str>) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    let mut text = String::new();
    let _ = writeln!(text, "# command = {}", cfg.command.name());
    let _ = writeln!(text, "# seed = {}", cfg.hp.seed);
    let _ = writeln!(text, "# data_sha256 = {}", data_sha256.unwrap_or("none"));
    let _ = writeln!(text, "# code_version = {CODE_VERSION}");
    text.push_str(&cfg.to_text());
    fs::write(cfg.out.join("run_config.txt"), text)?;
    Ok(())
}

pub fn split_log(cfg: &RunConfig, log: &InteractionLog) -> Result<Split> {
    leave_one_out_split(
        log,
        &SplitOptions {
            validation: cfg.hp.validation_split,
            target_behavior_only: cfg.hp.eval_target_behavior_only,
            primary_behavior: cfg.hp.primary_behavior,
        },
    )
}

/// Trains on `split.train` with `cfg.hp` (negatives avoid the full history).
pub fn train_split(cfg: &RunConfig, full: &InteractionLog, split: &Split) -> Result<TrainOutput<f32>> {
    let validation = if split.validation.is_empty() {
        None
    } else {
        Some(build_eval_instances(&split.validation, full, cfg.hp.max_len, cfg.hp.primary_behavior, cfg.hp.seed)?)
    };
    let checkpoint_dir = cfg.hp.checkpoint_every.map(|_| cfg.out.as_path());
    let options = TrainOptions {
        exclude: Some(full),
        validation: validation.as_deref(),
        checkpoint_dir,
        checkpoint_meta: cfg.to_text(),
        prefetch: if cfg.threads == Some(1) { 0 } else { cfg.prefetch },
        on_epoch: None,
    };
    train(&split.train, &cfg.hp, options)
}

/// Evaluates `params` once per evaluation seed (`seed, seed+1, …`), each
/// with freshly sampled candidates.
pub fn evaluate_seeds(
    cfg: &RunConfig,
    params: &ModelParams<f32>,
    full: &InteractionLog,
    split: &Split,
) -> Result<EvalResult> {
    let mut result = EvalResult::default();
    for i in 0..cfg.eval_seeds as u64 {
        let seed = cfg.hp.seed + i;
        let instances = build_eval_instances(&split.test, full, params.config.max_len, cfg.hp.primary_behavior, seed)?;
        result.runs.push(evaluate(params, &instances, seed)?);
    }
    Ok(result)
}

/// Retrains and evaluates once per seed (`seed, seed+1, …`).
pub fn run_experiment(cfg: &RunConfig, full: &InteractionLog, split: &Split) -> Result<EvalResult> {
    let mut result = EvalResult::default();
    for i in 0..cfg.eval_seeds as u64 {
        let mut run_cfg = cfg.clone();
        run_cfg.hp.seed = cfg.hp.seed + i;
        run_cfg.hp.checkpoint_every = None;
        let trained = train_split(&run_cfg, full, split)?;
        let instances =
            build_eval_instances(&split.test, full, run_cfg.hp.max_len, run_cfg.hp.primary_behavior, run_cfg.hp.seed)?;
        result.runs.push(evaluate(&trained.params, &instances, run_cfg.hp.seed)?);
    }
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub output: TrainOutput<f32>,
    pub summary: String,
}

/// `train`: fit on the leave-one-out training split and write
/// `model.ckpt`, `loss_trace.csv` and `summary.txt`.
pub fn run_train(cfg: &RunConfig) -> Result<TrainReport> {
    let data = load_dataset(cfg)?;
    cfg.hp.validate(data.log.num_behaviors())?;
    write_run_header(cfg, Some(&data.sha256))?;
    let split = split_log(cfg, &data.log)?;
    let output = train_split(cfg, &data.log, &split)?;
    Checkpoint { params: output.params.clone(), meta: cfg.to_text() }.save(cfg.checkpoint_path())?;
    output.write_trace_csv(fs::File::create(cfg.out.join("loss_trace.csv"))?)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "trained {} epochs, {} steps", cfg.hp.epochs, output.trace.len());
    if let (Some(first), Some(last)) = (output.epochs.first(), output.epochs.last()) {
        let _ = writeln!(summary, "mean loss: first epoch {:.6}, last epoch {:.6}", first.mean_loss, last.mean_loss);
        if let Some(hr) = last.validation_hr10 {
            let _ = writeln!(summary, "validation HR@10: {hr:.4}");
        }
    }
    let _ = writeln!(summary, "checkpoint: {}", cfg.checkpoint_path().display());
    fs::write(cfg.out.join("summary.txt"), &summary)?;
    Ok(TrainReport { output, summary })
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub result: EvalResult,
    pub summary: String,
}

/// Writes `metrics.csv`, `per_user.csv`, `buckets.csv` and `summary.txt`.
pub fn write_eval_outputs(cfg: &RunConfig, result: &EvalResult, dir: &Path) -> Result<String> {
    result.write_metrics_csv(&cfg.metric_ns, fs::File::create(dir.join("metrics.csv"))?)?;
    result.write_user_csv(fs::File::create(dir.join("per_user.csv"))?)?;
    let n = if cfg.metric_ns.contains(&10) { 10 } else { cfg.metric_ns[0] };
    let buckets = evaluate_stratified(result, &cfg.bucket_edges, n);
    write_buckets_csv(&buckets, fs::File::create(dir.join("buckets.csv"))?)?;
    let mut s = String::new();
    let users = result.runs.first().map_or(0, |r| r.records.len());
    let _ = writeln!(s, "{} evaluation users, {} seeds", users, result.runs.len());
    for &n in &cfg.metric_ns {
        let (hr, ndcg) = (result.hr(n), result.ndcg(n));
        let _ = writeln!(s, "HR@{n:<3} {:.4} ± {:.4}   NDCG@{n:<3} {:.4} ± {:.4}", hr.mean, hr.std, ndcg.mean, ndcg.std);
    }
    let _ = writeln!(s, "by primary-interaction count (HR@{n} / NDCG@{n}):");
    for b in &buckets {
        let _ = writeln!(s, "  {:<12} {:>6} users  {:.4} / {:.4}", b.label(), b.users, b.hr, b.ndcg);
    }
    fs::write(dir.join("summary.txt"), &s)?;
    Ok(s)
}

/// `eval`: rank held-out items with a saved checkpoint.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let data = load_dataset(cfg)?;
    let ckpt = Checkpoint::<f32>::load(cfg.checkpoint_path())?;
    let c = ckpt.params.config;
    if c.num_items != data.log.num_items() || c.num_behaviors != data.log.num_behaviors() {
        return Err(CasmError::Data(format!(
            "checkpoint was trained on {} items / {} behaviors, data has {} / {}",
            c.num_items,
            c.num_behaviors,
            data.log.num_items(),
            data.log.num_behaviors()
        )));
    }
    write_run_header(cfg, Some(&data.sha256))?;
    let split = split_log(cfg, &data.log)?;
    let result = evaluate_seeds(cfg, &ckpt.params, &data.log, &split)?;
    let summary = write_eval_outputs(cfg, &result, &cfg.out)?;
    Ok(EvalReport { result, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSummary {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub behaviors: Vec<(String, usize)>,
    pub min_len: usize,
    pub median_len: usize,
    pub max_len: usize,
    pub eval_users: usize,
}

impl DataSummary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "users         {}", self.users);
        let _ = writeln!(s, "items         {}", self.items);
        let _ = writeln!(s, "interactions  {}", self.interactions);
        let _ = writeln!(s, "history length min / median / max: {} / {} / {}", self.min_len, self.median_len, self.max_len);
        let _ = writeln!(s, "evaluation users: {}", self.eval_users);
        for (i, (name, count)) in self.behaviors.iter().enumerate() {
            let _ = writeln!(s, "behavior {i} ({name}): {count}");
        }
        s
    }
}

pub fn summarize(cfg: &RunConfig, log: &InteractionLog) -> Result<DataSummary> {
    let mut lens: Vec<usize> = log.users().iter().map(|u| u.events.len()).collect();
    lens.sort_unstable();
    let split = split_log(cfg, log)?;
    Ok(DataSummary {
        users: log.num_users(),
        items: log.num_items(),
        interactions: log.num_interactions(),
        behaviors: log.behavior_names().iter().cloned().zip(log.behavior_counts()).collect(),
        min_len: lens.first().copied().unwrap_or(0),
        median_len: lens.get(lens.len() / 2).copied().unwrap_or(0),
        max_len: lens.last().copied().unwrap_or(0),
        eval_users: split.test.len(),
    })
}

/// `inspect-data`: dataset statistics written to `data_summary.txt`.
pub fn run_inspect(cfg: &RunConfig) -> Result<DataSummary> {
    let data = load_dataset(cfg)?;
    write_run_header(cfg, Some(&data.sha256))?;
    let summary = summarize(cfg, &data.log)?;
    fs::write(cfg.out.join("data_summary.txt"), summary.render())?;
    Ok(summary)
}

/// Runs `f` on a pool capped at `cfg.threads` workers (global pool otherwise).
pub fn with_threads<R: Send>(cfg: &RunConfig, f: impl FnOnce() -> R + Send) -> Result<R> {
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CasmError::Config(format!("threads: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
