//! Leave-one-out ranking metrics, multi-seed aggregation and frequency buckets.

pub mod metrics;
pub mod result;

pub use metrics::{hr_at_n, mean_std, ndcg_at_n, rank_of_positive};
pub use result::{
    evaluate, evaluate_stratified, rank_instances, write_buckets_csv, BucketRow, EvalResult, MetricSummary, SeedRun, UserRecord,
};
