//! Central finite-difference gradient checking.

use rand::seq::index::sample;

use super::matrix::Matrix;
use super::params::{ParamId, ParamSet};
use crate::error::{CasmError, Result};
use crate::rng::{stream_rng, Stream};

/// Below this magnitude of analytic gradient the absolute error is reported.
pub const ABSOLUTE_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// `(parameter name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares analytic gradients against `(f(θ+ε) − f(θ−ε)) / 2ε` for up to
/// `samples` parameter entries drawn uniformly without replacement.
///
/// `loss_fn` returns the loss and its analytic gradients aligned with the
/// parameter set. It must be deterministic: it is evaluated twice at the
/// unperturbed point and any disagreement is a protocol error.
pub fn finite_diff_check<F>(
    loss_fn: F,
    params: &mut ParamSet<f64>,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet<f64>) -> Result<(f64, Vec<Matrix<f64>>)>,
{
    let (base, analytic) = loss_fn(params)?;
    let (again, _) = loss_fn(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(CasmError::Protocol(format!(
            "loss function is not deterministic: {base} vs {again} on identical parameters"
        )));
    }
    if analytic.len() != params.len() {
        return Err(CasmError::Protocol(format!(
            "loss function returned {} gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }

    let offsets: Vec<usize> = params
        .values()
        .iter()
        .scan(0, |acc, m| {
            let start = *acc;
            *acc += m.len();
            Some(start)
        })
        .collect();
    let total = params.num_scalars();
    let mut rng = stream_rng(seed, Stream::GradCheck, &[total as u64]);
    let mut picks = sample(&mut rng, total, samples.min(total)).into_vec();
    picks.sort_unstable();

    let mut report = GradCheckReport { max_relative_error: 0.0, checked: 0, worst: None };
    for flat in picks {
        let which = offsets.partition_point(|&o| o <= flat) - 1;
        let id = ParamId(which);
        let local = flat - offsets[which];
        let original = params.get(id).data()[local];

        params.get_mut(id).data_mut()[local] = original + epsilon;
        let (plus, _) = loss_fn(params)?;
        params.get_mut(id).data_mut()[local] = original - epsilon;
        let (minus, _) = loss_fn(params)?;
        params.get_mut(id).data_mut()[local] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let exact = analytic[which].data()[local];
        let err = relative_error(exact, numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = err;
            report.worst = Some((params.name(id).to_string(), local, exact, numeric));
        }
    }
    Ok(report)
}

/// `|a − n| / max(|a|, |n|)`, or `|a − n|` when `|a|` is below
/// [`ABSOLUTE_ERROR_FLOOR`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if analytic.abs() < ABSOLUTE_ERROR_FLOOR {
        diff
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::sigmoid;
    use std::cell::Cell;

    #[test]
    fn square_at_one() {
        let mut params = ParamSet::new();
        params.push("x", Matrix::filled(1, 1, 1.0));
        let f = |p: &ParamSet<f64>| {
            let x = p.get(ParamId(0)).get(0, 0);
            Ok((x * x, vec![Matrix::filled(1, 1, 2.0 * x)]))
        };
        let report = finite_diff_check(f, &mut params, 1e-5, 1, 0).unwrap();
        assert_eq!(report.checked, 1);
        let (_, _, analytic, numeric) = report.worst.unwrap();
        assert_eq!(analytic, 2.0);
        assert!((numeric - 2.0).abs() < 1e-9);
    }

    #[test]
    fn logistic_regression_closed_form() {
        // loss = -[y ln σ(w·x + b) + (1-y) ln(1 - σ(w·x + b))], grad_w = (σ - y) x
        let x = [0.4, -1.3, 2.2];
        let y = 1.0;
        let mut params = ParamSet::new();
        params.push("w", Matrix::row_vector(vec![0.1, 0.2, -0.3]));
        params.push("b", Matrix::filled(1, 1, 0.05));
        let f = |p: &ParamSet<f64>| {
            let w = p.get(ParamId(0));
            let b = p.get(ParamId(1)).get(0, 0);
            let z: f64 = w.data().iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b;
            let s = sigmoid(z);
            let loss = -(y * s.ln() + (1.0 - y) * (1.0 - s).ln());
            let gw = Matrix::row_vector(x.iter().map(|xi| (s - y) * xi).collect());
            Ok((loss, vec![gw, Matrix::filled(1, 1, s - y)]))
        };
        let report = finite_diff_check(f, &mut params, 1e-5, 100, 3).unwrap();
        assert_eq!(report.checked, 4);
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn detects_nondeterministic_loss() {
        let mut params = ParamSet::new();
        params.push("x", Matrix::filled(1, 1, 1.0));
        let counter = Cell::new(0.0);
        let f = |_: &ParamSet<f64>| {
            counter.set(counter.get() + 1.0);
            Ok((counter.get(), vec![Matrix::filled(1, 1, 0.0)]))
        };
        assert!(matches!(finite_diff_check(f, &mut params, 1e-5, 1, 0), Err(CasmError::Protocol(_))));
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut params = ParamSet::new();
        params.push("x", Matrix::filled(1, 1, 2.0));
        let f = |p: &ParamSet<f64>| {
            let x = p.get(ParamId(0)).get(0, 0);
            Ok((x * x * x, vec![Matrix::filled(1, 1, 2.0 * x)]))
        };
        let report = finite_diff_check(f, &mut params, 1e-5, 1, 0).unwrap();
        assert!(report.max_relative_error > 0.3);
    }
}
