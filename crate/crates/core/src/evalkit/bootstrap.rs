use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, Metric};
use crate::rng;
use crate::{Error, Result};

/// Linear-interpolation percentile of sorted data, `q` in [0, 100]
/// (numpy's default definition).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Resample index log: resample `r` draws `n` indices with replacement from
/// stream `(seed, r)`.
pub fn resample_indices(n: usize, n_resamples: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..n_resamples)
        .map(|r| {
            let mut g = rng::stream(seed, r as u64);
            (0..n).map(|_| g.random_range(0..n)).collect()
        })
        .collect()
}

fn percentile_interval(mut values: Vec<f64>, level: f64) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(format!("confidence level must be in (0, 1), got {level}")));
    }
    if values.is_empty() {
        return Err(Error::config("at least one resample is required"));
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0 * 100.0;
    Ok(Interval {
        lo: percentile(&values, tail),
        hi: percentile(&values, 100.0 - tail),
    })
}

/// Percentile interval of `metric` over the given resamples.
pub fn bootstrap_ci_with_log(
    truth: &[usize],
    predicted: &[usize],
    num_classes: usize,
    metric: Metric,
    log: &[Vec<usize>],
    level: f64,
) -> Result<Interval> {
    if truth.is_empty() {
        return Err(Error::data("bootstrap needs a non-empty test set"));
    }
    if truth.len() != predicted.len() {
        return Err(Error::dim("bootstrap_ci", "labels", truth.len(), predicted.len()));
    }
    let mut t = Vec::with_capacity(truth.len());
    let mut p = Vec::with_capacity(truth.len());
    let values = log
        .iter()
        .map(|idx| {
            t.clear();
            p.clear();
            for &i in idx {
                t.push(truth[i]);
                p.push(predicted[i]);
            }
            Ok(metric.of(&ConfusionMatrix::new(&t, &p, num_classes)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    percentile_interval(values, level)
}

pub fn bootstrap_ci(
    truth: &[usize],
    predicted: &[usize],
    num_classes: usize,
    metric: Metric,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Interval> {
    if truth.is_empty() {
        return Err(Error::data("bootstrap needs a non-empty test set"));
    }
    let log = resample_indices(truth.len(), n_resamples, seed);
    bootstrap_ci_with_log(truth, predicted, num_classes, metric, &log, level)
}

/// Percentile interval of the mean of per-run scores.
pub fn mean_bootstrap_ci(values: &[f64], n_resamples: usize, level: f64, seed: u64) -> Result<Interval> {
    if values.is_empty() {
        return Err(Error::data("bootstrap needs at least one value"));
    }
    let means = resample_indices(values.len(), n_resamples, seed)
        .iter()
        .map(|idx| idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64)
        .collect();
    percentile_interval(means, level)
}
