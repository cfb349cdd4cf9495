use std::io::Write;

use rayon::prelude::*;

use super::metrics::{hr_at_n, mean_std, ndcg_at_n, rank_of_positive};
use crate::data::EvalInstance;
use crate::error::Result;
use crate::model::{score_instances, ModelParams};
use crate::numerics::Real;

/// Instances scored per forward pass.
const SCORING_CHUNK: usize = 64;

/// One user's outcome in one seeded run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserRecord {
    pub user_id: u64,
    /// Rank of the positive among the candidates, `1..=candidates`.
    pub rank: usize,
    /// Primary-behavior interactions in the user's input history.
    pub primary_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<UserRecord>,
}

impl SeedRun {
    pub fn hr(&self, n: usize) -> f64 {
        self.mean_of(|r| hr_at_n(r.rank, n))
    }

    pub fn ndcg(&self, n: usize) -> f64 {
        self.mean_of(|r| ndcg_at_n(r.rank, n))
    }

    fn mean_of(&self, f: impl Fn(&UserRecord) -> f64) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(f).sum::<f64>() / self.records.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub seed_values: Vec<f64>,
}

impl MetricSummary {
    fn from_values(seed_values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&seed_values);
        Self { mean, std, seed_values }
    }
}

/// Per-seed runs of the same evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalResult {
    pub runs: Vec<SeedRun>,
}

impl EvalResult {
    pub fn hr(&self, n: usize) -> MetricSummary {
        MetricSummary::from_values(self.runs.iter().map(|r| r.hr(n)).collect())
    }

    pub fn ndcg(&self, n: usize) -> MetricSummary {
        MetricSummary::from_values(self.runs.iter().map(|r| r.ndcg(n)).collect())
    }

    /// CSV with columns `metric,N,mean,std,seed_values`; seed values are
    /// `;`-separated in run order.
    pub fn write_metrics_csv(&self, ns: &[usize], mut w: impl Write) -> Result<()> {
        writeln!(w, "metric,N,mean,std,seed_values")?;
        for (name, f) in [("HR", Self::hr as fn(&Self, usize) -> MetricSummary), ("NDCG", Self::ndcg)] {
            for &n in ns {
                let s = f(self, n);
                let values: Vec<String> = s.seed_values.iter().map(|v| format!("{v:.6}")).collect();
                writeln!(w, "{name},{n},{:.6},{:.6},{}", s.mean, s.std, values.join(";"))?;
            }
        }
        Ok(())
    }

    /// CSV with columns `seed,user_id,rank,primary_count`.
    pub fn write_user_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "seed,user_id,rank,primary_count")?;
        for run in &self.runs {
            for r in &run.records {
                writeln!(w, "{},{},{},{}", run.seed, r.user_id, r.rank, r.primary_count)?;
            }
        }
        Ok(())
    }
}

/// Scores every instance's candidates with the last-position representation
/// and records the positive's rank. Work is split across the rayon pool;
/// the output order matches `instances`.
pub fn rank_instances<T: Real>(params: &ModelParams<T>, instances: &[EvalInstance]) -> Result<Vec<UserRecord>> {
    let chunks: Vec<Vec<UserRecord>> = instances
        .par_chunks(SCORING_CHUNK)
        .map(|chunk| {
            let scores = score_instances(params, chunk)?;
            Ok(chunk
                .iter()
                .enumerate()
                .map(|(i, inst)| UserRecord {
                    user_id: inst.user_id,
                    rank: rank_of_positive(scores.row(i), inst.positive_index),
                    primary_count: inst.primary_count,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// One seeded evaluation run.
pub fn evaluate<T: Real>(params: &ModelParams<T>, instances: &[EvalInstance], seed: u64) -> Result<SeedRun> {
    Ok(SeedRun { seed, records: rank_instances(params, instances)? })
}

/// Aggregates for users whose primary count falls in `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketRow {
    pub lo: usize,
    /// `None` for the open-ended last bucket.
    pub hi: Option<usize>,
    pub users: usize,
    pub hr: f64,
    pub ndcg: f64,
}

impl BucketRow {
    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) => format!("[{}, {})", self.lo, hi),
            None => format!("[{}, inf)", self.lo),
        }
    }
}

/// Groups the records of every run by primary-interaction count. `edges`
/// must be increasing; buckets are `[e0, e1), …, [e_last, ∞)`. Empty buckets
/// are omitted.
pub fn evaluate_stratified(result: &EvalResult, edges: &[usize], n: usize) -> Vec<BucketRow> {
    let mut rows = Vec::new();
    for (i, &lo) in edges.iter().enumerate() {
        let hi = edges.get(i + 1).copied();
        let members: Vec<&UserRecord> = result
            .runs
            .iter()
            .flat_map(|r| &r.records)
            .filter(|r| r.primary_count >= lo && hi.is_none_or(|h| r.primary_count < h))
            .collect();
        if members.is_empty() {
            continue;
        }
        let count = members.len() as f64;
        rows.push(BucketRow {
            lo,
            hi,
            users: members.len(),
            hr: members.iter().map(|r| hr_at_n(r.rank, n)).sum::<f64>() / count,
            ndcg: members.iter().map(|r| ndcg_at_n(r.rank, n)).sum::<f64>() / count,
        });
    }
    rows
}

/// CSV with columns `bucket,lo,hi,users,hr,ndcg` (`hi` empty when open-ended).
pub fn write_buckets_csv(rows: &[BucketRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "bucket,lo,hi,users,hr,ndcg")?;
    for r in rows {
        let hi = r.hi.map(|h| h.to_string()).unwrap_or_default();
        writeln!(w, "\"{}\",{},{},{},{:.6},{:.6}", r.label(), r.lo, hi, r.users, r.hr, r.ndcg)?;
    }
    Ok(())
}
