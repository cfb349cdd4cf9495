/// `1 + #{j ≠ positive : scores[j] ≥ scores[positive]}`; ties count against the positive.
pub fn rank_of_positive<T: PartialOrd>(scores: &[T], positive_index: usize) -> usize {
    let pos = &scores[positive_index];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, s)| j != positive_index && s >= pos)
        .count()
}

pub fn hr_at_n(rank: usize, n: usize) -> f64 {
    if rank <= n {
        1.0
    } else {
        0.0
    }
}

/// Single-relevant-item NDCG: `1 / log2(1 + rank)` inside the cutoff.
pub fn ndcg_at_n(rank: usize, n: usize) -> f64 {
    if rank <= n {
        1.0 / ((1 + rank) as f64).log2()
    } else {
        0.0
    }
}

/// Arithmetic mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
