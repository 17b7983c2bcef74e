use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GradientMap, Parameter, Tensor};
use crate::{Error, Result};

/// Adam hyper-parameters. Defaults: lr 3e−4, β₁ 0.9, β₂ 0.999, ε 1e−7.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn moments(&self, name: &str) -> Option<(&Tensor, &Tensor)> {
        self.moments.get(name).map(|(m, v)| (m, v))
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(AdamConfig::default())
    }
}

/// One bias-corrected Adam update over every non-frozen parameter.
///
/// Frozen parameters are skipped entirely. A trainable parameter without a
/// gradient entry is an error.
pub fn adam_step<'a>(
    params: impl IntoIterator<Item = &'a mut Parameter>,
    grads: &GradientMap,
    state: &mut AdamState,
) -> Result<()> {
    let params: Vec<&mut Parameter> = params.into_iter().collect();
    for p in params.iter().filter(|p| !p.frozen) {
        let g = grads
            .get(&p.name)
            .ok_or_else(|| Error::data(format!("missing gradient for trainable parameter {}", p.name)))?;
        if g.shape() != p.value.shape() {
            return Err(Error::dim("adam_step", "parameter", p.value.len(), g.len()));
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for p in params.into_iter().filter(|p| !p.frozen) {
        let g = grads.get(&p.name).expect("checked above");
        let (m, v) = state.moments.entry(p.name.clone()).or_insert_with(|| {
            (Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape()))
        });
        for (((w, &gi), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
