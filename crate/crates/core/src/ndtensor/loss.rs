use serde::{Deserialize, Serialize};

use super::{GradientMap, Parameter, Tensor};
use crate::{Error, Result};

/// Probabilities are clamped to at least this before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// L2 weight decay on trainable weights (biases excluded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizationConfig {
    pub l2_factor: f64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self { l2_factor: 1e-4 }
    }
}

/// `−Σ target·log(predicted)`; soft targets are allowed.
pub fn categorical_cross_entropy(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::dim("categorical_cross_entropy", "classes", predicted.len(), target.len()));
    }
    for (name, v) in [("predicted", predicted), ("target", target)] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::data(format!("{name} distribution sums to {s}, expected 1")));
        }
    }
    Ok(-predicted
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.clamp(PROB_FLOOR, 1.0).ln())
        .sum::<f64>())
}

/// `−[t·log p + (1−t)·log(1−p)]` with `p` clamped to `[1e−12, 1−1e−12]`.
pub fn binary_cross_entropy(predicted: f64, target: f64) -> f64 {
    let p = predicted.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// `β·Σ‖w‖²` over trainable regularized parameters, with gradients `2β·w`.
pub fn l2_penalty<'a>(
    params: impl IntoIterator<Item = &'a Parameter>,
    config: &RegularizationConfig,
) -> (f64, GradientMap) {
    let beta = config.l2_factor;
    let mut total = 0.0;
    let mut grads = GradientMap::new();
    for p in params {
        if p.frozen || !p.regularized {
            continue;
        }
        total += p.value.sum_squares();
        let mut g: Tensor = p.value.clone();
        g.scale(2.0 * beta);
        grads.insert(&p.name, g);
    }
    (beta * total, grads)
}

/// Value of [`l2_penalty`] without the gradients.
pub fn l2_value<'a>(params: impl IntoIterator<Item = &'a Parameter>, config: &RegularizationConfig) -> f64 {
    let total: f64 = params
        .into_iter()
        .filter(|p| !p.frozen && p.regularized)
        .map(|p| p.value.sum_squares())
        .sum();
    config.l2_factor * total
}
