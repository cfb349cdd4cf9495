//! Flat `key = value` run configuration with dataset presets.
//!
//! Resolution order, later wins: built-in defaults, preset, config file,
//! command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CasmError, Result};
use crate::training::Hyperparams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Ablate,
    Bench,
    InspectData,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Ablate => "ablate",
            Command::Bench => "bench",
            Command::InspectData => "inspect-data",
        }
    }
}

/// Which grid `ablate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationKind {
    Alpha,
    Context,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub lengths: Vec<usize>,
    pub warmup: usize,
    pub batches: usize,
    pub num_items: usize,
    pub num_behaviors: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self { lengths: vec![20, 50, 100, 200, 400], warmup: 1, batches: 3, num_items: 1000, num_behaviors: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub preset: Option<String>,
    /// Interaction file, or `synthetic:aux`, `synthetic:cyclic`, `synthetic:random`
    /// (optionally suffixed `:<seed>`).
    pub data: Option<String>,
    pub behavior_names: Option<PathBuf>,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub hp: Hyperparams,
    pub metric_ns: Vec<usize>,
    pub eval_seeds: usize,
    pub bucket_edges: Vec<usize>,
    pub ablation: AblationKind,
    pub bench: BenchSettings,
    pub threads: Option<usize>,
    pub prefetch: usize,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            preset: None,
            data: None,
            behavior_names: None,
            out: PathBuf::from("runs/latest"),
            checkpoint: None,
            hp: Hyperparams::default(),
            metric_ns: vec![5, 10, 20],
            eval_seeds: 3,
            bucket_edges: vec![0, 5, 10, 20, 50],
            ablation: AblationKind::Alpha,
            bench: BenchSettings::default(),
            threads: None,
            prefetch: 2,
        }
    }

    /// Checkpoint read by `eval` and written by `train`.
    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("model.ckpt"))
    }

    /// Every key with its resolved value, one `key = value` line each, in
    /// a form [`parse_config_text`] accepts.
    pub fn to_text(&self) -> String {
        let hp = &self.hp;
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("preset", opt(self.preset.clone()));
        kv("data", opt(self.data.clone()));
        kv("behavior_names", opt(self.behavior_names.as_ref().map(|p| p.display().to_string())));
        kv("out", self.out.display().to_string());
        kv("checkpoint", opt(self.checkpoint.as_ref().map(|p| p.display().to_string())));
        kv("d", hp.dim.to_string());
        kv("heads", hp.heads.to_string());
        kv("blocks", hp.blocks.to_string());
        kv("max_len", hp.max_len.to_string());
        kv("lr", hp.learning_rate.to_string());
        kv("dropout", hp.dropout.to_string());
        kv("batch_size", hp.batch_size.to_string());
        kv("epochs", hp.epochs.to_string());
        kv(
            "alpha",
            opt(hp.alpha.as_ref().map(|a| a.iter().map(f64::to_string).collect::<Vec<_>>().join(","))),
        );
        kv("beta", hp.beta.to_string());
        kv("seed", hp.seed.to_string());
        kv("use_context", hp.use_context.to_string());
        kv("plain_block", hp.plain_block.to_string());
        kv("eval_target_behavior_only", hp.eval_target_behavior_only.to_string());
        kv("validation_split", hp.validation_split.to_string());
        kv("primary_behavior", hp.primary_behavior.to_string());
        kv("grad_clip", opt(hp.grad_clip.map(|c| c.to_string())));
        kv("checkpoint_every", opt(hp.checkpoint_every.map(|c| c.to_string())));
        kv("metric_n", join(&self.metric_ns));
        kv("eval_seeds", self.eval_seeds.to_string());
        kv("bucket_edges", join(&self.bucket_edges));
        kv(
            "ablation",
            match self.ablation {
                AblationKind::Alpha => "alpha",
                AblationKind::Context => "context",
                AblationKind::All => "all",
            }
            .into(),
        );
        kv("bench_lengths", join(&self.bench.lengths));
        kv("bench_warmup", self.bench.warmup.to_string());
        kv("bench_batches", self.bench.batches.to_string());
        kv("bench_items", self.bench.num_items.to_string());
        kv("bench_behaviors", self.bench.num_behaviors.to_string());
        kv("threads", opt(self.threads.map(|t| t.to_string())));
        kv("prefetch", self.prefetch.to_string());
        s
    }

    /// Applies one `key = value` setting, using the same keys as config files.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let hp = &mut self.hp;
        match key {
            "preset" => self.preset = non_empty(v).map(str::to_string),
            "data" => self.data = non_empty(v).map(str::to_string),
            "behavior_names" => self.behavior_names = non_empty(v).map(PathBuf::from),
            "out" => self.out = PathBuf::from(v),
            "checkpoint" => self.checkpoint = non_empty(v).map(PathBuf::from),
            "d" => hp.dim = parse(key, v)?,
            "heads" => hp.heads = parse(key, v)?,
            "blocks" => hp.blocks = parse(key, v)?,
            "max_len" => hp.max_len = parse(key, v)?,
            "lr" => hp.learning_rate = parse(key, v)?,
            "dropout" => hp.dropout = parse(key, v)?,
            "batch_size" => hp.batch_size = parse(key, v)?,
            "epochs" => hp.epochs = parse(key, v)?,
            "alpha" => hp.alpha = non_empty(v).map(|v| parse_list(key, v)).transpose()?,
            "beta" => hp.beta = parse(key, v)?,
            "seed" => hp.seed = parse(key, v)?,
            "use_context" => hp.use_context = parse_bool(key, v)?,
            "plain_block" => hp.plain_block = parse_bool(key, v)?,
            "eval_target_behavior_only" => hp.eval_target_behavior_only = parse_bool(key, v)?,
            "validation_split" => hp.validation_split = parse_bool(key, v)?,
            "primary_behavior" => hp.primary_behavior = parse(key, v)?,
            "grad_clip" => hp.grad_clip = non_empty(v).map(|v| parse(key, v)).transpose()?,
            "checkpoint_every" => hp.checkpoint_every = non_empty(v).map(|v| parse(key, v)).transpose()?,
            "metric_n" => self.metric_ns = parse_list(key, v)?,
            "eval_seeds" => self.eval_seeds = parse(key, v)?,
            "bucket_edges" => self.bucket_edges = parse_list(key, v)?,
            "ablation" => {
                self.ablation = match v {
                    "alpha" => AblationKind::Alpha,
                    "context" => AblationKind::Context,
                    "all" => AblationKind::All,
                    _ => return Err(CasmError::Config(format!("ablation: expected alpha, context or all, got `{v}`"))),
                }
            }
            "bench_lengths" => self.bench.lengths = parse_list(key, v)?,
            "bench_warmup" => self.bench.warmup = parse(key, v)?,
            "bench_batches" => self.bench.batches = parse(key, v)?,
            "bench_items" => self.bench.num_items = parse(key, v)?,
            "bench_behaviors" => self.bench.num_behaviors = parse(key, v)?,
            "threads" => self.threads = non_empty(v).map(|v| parse(key, v)).transpose()?,
            "prefetch" => self.prefetch = parse(key, v)?,
            _ => return Err(CasmError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Checks constraints that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let hp = &self.hp;
        if hp.dim == 0 || hp.heads == 0 || !hp.dim.is_multiple_of(hp.heads) {
            return Err(CasmError::Config(format!("d: {} is not a positive multiple of heads = {}", hp.dim, hp.heads)));
        }
        if hp.max_len < 2 {
            return Err(CasmError::Config(format!("max_len: must be at least 2, got {}", hp.max_len)));
        }
        if self.metric_ns.is_empty() || self.metric_ns.contains(&0) {
            return Err(CasmError::Config("metric_n: needs at least one positive cutoff".into()));
        }
        if self.eval_seeds == 0 {
            return Err(CasmError::Config("eval_seeds: must be positive".into()));
        }
        if self.bucket_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CasmError::Config("bucket_edges: must be strictly increasing".into()));
        }
        if self.threads == Some(0) {
            return Err(CasmError::Config("threads: must be positive".into()));
        }
        if self.bench.lengths.iter().any(|&l| l < 2) || self.bench.batches == 0 {
            return Err(CasmError::Config("bench_lengths / bench_batches: lengths ≥ 2 and at least one timed batch".into()));
        }
        Ok(())
    }
}

fn non_empty(v: &str) -> Option<&str> {
    if v.is_empty() {
        None
    } else {
        Some(v)
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| CasmError::Config(format!("{key}: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CasmError::Config(format!("{key}: expected a boolean, got `{v}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| parse(key, x.trim())).collect()
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 4] = ["taobao", "tianchi", "yelp", "movielens"];

/// Dataset presets: `(key, value)` pairs applied on top of the defaults.
pub fn preset(name: &str) -> Result<Vec<(&'static str, &'static str)>> {
    let common = [("heads", "1"), ("blocks", "1"), ("batch_size", "128"), ("beta", "1.1")];
    let specific: &[(&str, &str)] = match name {
        "taobao" => &[("d", "85"), ("max_len", "150"), ("dropout", "0.25"), ("lr", "0.0005"), ("alpha", "0.7,0.1,0.1,0.1")],
        "tianchi" => &[("d", "50"), ("max_len", "70"), ("dropout", "0.5"), ("lr", "0.0007"), ("alpha", "0.7,0.1,0.1,0.1")],
        "yelp" => &[("d", "50"), ("max_len", "150"), ("dropout", "0.5"), ("lr", "0.0003"), ("alpha", "0.3,0.3,0.2,0.2")],
        "movielens" => &[("d", "70"), ("max_len", "70"), ("dropout", "0.4"), ("lr", "0.0006"), ("alpha", "0.9,0.1,0.0")],
        _ => {
            return Err(CasmError::Config(format!(
                "preset: unknown preset `{name}` (available: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(common.iter().chain(specific).copied().collect())
}

/// Splits `key = value` text into pairs; `#` starts a comment line.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CasmError::Config(format!("config line {}: expected `key = value`, got `{line}`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Resolves a configuration from config-file text and override pairs.
pub fn parse_config_text(command: Command, file_text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let file = parse_pairs(file_text)?;
    let preset_name = overrides
        .iter()
        .rev()
        .find(|(k, _)| k == "preset")
        .or_else(|| file.iter().rev().find(|(k, _)| k == "preset"))
        .map(|(_, v)| v.clone());
    let mut cfg = RunConfig::defaults(command);
    if let Some(name) = preset_name.as_deref().and_then(non_empty) {
        for (k, v) in preset(name)? {
            cfg.set(k, v)?;
        }
    }
    for (k, v) in file.iter().chain(overrides) {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Resolves a configuration from an optional file and override pairs.
pub fn parse_config(command: Command, file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = match file {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CasmError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))?,
        None => String::new(),
    };
    parse_config_text(command, &text, overrides)
}
