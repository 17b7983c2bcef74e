use log::debug;
use serde::{Deserialize, Serialize};

use super::{Classifier, DecisionTree, GaussianNb, KNearest, TreeConfig};
use crate::pipeline::argmax;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnCoConfig {
    /// Working-pool size as a fraction of the initial unlabeled set.
    pub pool_fraction: f64,
    pub iterations: usize,
    pub tree: TreeConfig,
    pub nb_var_floor: f64,
    pub neighbors: usize,
    pub seed: u64,
}

impl Default for EnCoConfig {
    fn default() -> Self {
        Self {
            pool_fraction: 0.1,
            iterations: 20,
            tree: TreeConfig::default(),
            nb_var_floor: 1e-9,
            neighbors: 3,
            seed: 0,
        }
    }
}

impl EnCoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if !(self.pool_fraction > 0.0 && self.pool_fraction <= 1.0) {
            return Err(Error::config(format!("pool_fraction must be in (0, 1], got {}", self.pool_fraction)));
        }
        if self.neighbors == 0 {
            return Err(Error::config("neighbors must be at least 1"));
        }
        Ok(())
    }
}

/// Decision tree, Gaussian naive Bayes and k-NN trained on the same data.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub tree: DecisionTree,
    pub bayes: GaussianNb,
    pub knn: KNearest,
    num_classes: usize,
}

impl Ensemble {
    pub fn fit(x: &[Vec<f64>], y: &[usize], num_classes: usize, cfg: &EnCoConfig) -> Result<Self> {
        Ok(Self {
            tree: DecisionTree::fit(x, y, num_classes, &cfg.tree)?,
            bayes: GaussianNb::fit(x, y, num_classes, cfg.nb_var_floor)?,
            knn: KNearest::fit(x, y, num_classes, cfg.neighbors)?,
            num_classes,
        })
    }

    /// Individual votes of (tree, naive Bayes, k-NN).
    pub fn votes(&self, x: &[f64]) -> [usize; 3] {
        [self.tree.predict(x), self.bayes.predict(x), self.knn.predict(x)]
    }

    /// Majority vote; without a majority, the largest summed posterior, then
    /// the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let votes = self.votes(x);
        let mut tally = vec![0usize; self.num_classes];
        for v in votes {
            tally[v] += 1;
        }
        if let Some(c) = (0..self.num_classes).find(|&c| tally[c] >= 2) {
            return c;
        }
        let mut summed = vec![0.0; self.num_classes];
        for p in [self.tree.predict_proba(x), self.bayes.predict_proba(x), self.knn.predict_proba(x)] {
            for (s, v) in summed.iter_mut().zip(p) {
                *s += v;
            }
        }
        argmax(&summed)
    }
}

/// Trained ensemble plus the labeled-pool size after each iteration.
#[derive(Debug, Clone)]
pub struct EnCoOutcome {
    pub ensemble: Ensemble,
    pub pool_sizes: Vec<usize>,
    /// Labels of the final pool; the first `|labeled|` are the originals.
    pub labels: Vec<usize>,
}

/// Agreement-based co-training. Each iteration trains the ensemble on the
/// labeled pool, draws a working pool from the remaining unlabeled samples,
/// and moves samples on which all three classifiers agree into the labeled
/// pool. Stops early when the unlabeled set is exhausted.
pub fn en_co_train(
    labeled_x: &[Vec<f64>],
    labeled_y: &[usize],
    unlabeled_x: &[Vec<f64>],
    num_classes: usize,
    cfg: &EnCoConfig,
) -> Result<EnCoOutcome> {
    cfg.validate()?;
    let mut present = vec![false; num_classes];
    for &c in labeled_y {
        if c >= num_classes {
            return Err(Error::data(format!("label {c} outside {num_classes} classes")));
        }
        present[c] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::config(format!("class {missing} has no labeled samples")));
    }
    let mut x: Vec<Vec<f64>> = labeled_x.to_vec();
    let mut y: Vec<usize> = labeled_y.to_vec();
    let mut remaining: Vec<usize> = (0..unlabeled_x.len()).collect();
    let pool_size = ((unlabeled_x.len() as f64 * cfg.pool_fraction).ceil() as usize).max(1);
    let mut r = rng::seeded(cfg.seed);
    let mut pool_sizes = Vec::new();
    for it in 0..cfg.iterations {
        if remaining.is_empty() {
            break;
        }
        let ensemble = Ensemble::fit(&x, &y, num_classes, cfg)?;
        let take = pool_size.min(remaining.len());
        let mut picked = rand::seq::index::sample(&mut r, remaining.len(), take).into_vec();
        picked.sort_unstable();
        let mut moved = vec![false; remaining.len()];
        for &p in &picked {
            let sample = &unlabeled_x[remaining[p]];
            let [a, b, c] = ensemble.votes(sample);
            if a == b && b == c {
                x.push(sample.clone());
                y.push(a);
                moved[p] = true;
            }
        }
        remaining = remaining
            .iter()
            .zip(&moved)
            .filter(|(_, m)| !**m)
            .map(|(i, _)| *i)
            .collect();
        debug!("en-co-training iteration {it}: labeled pool {}", x.len());
        pool_sizes.push(x.len());
    }
    Ok(EnCoOutcome {
        ensemble: Ensemble::fit(&x, &y, num_classes, cfg)?,
        pool_sizes,
        labels: y,
    })
}
