use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Common interface of the three ensemble members.
pub trait Classifier {
    /// Class posterior for one feature vector.
    fn predict_proba(&self, x: &[f64]) -> Vec<f64>;

    fn predict(&self, x: &[f64]) -> usize {
        crate::pipeline::argmax(&self.predict_proba(x))
    }
}

fn check_training(x: &[Vec<f64>], y: &[usize], num_classes: usize) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::config("cannot fit a classifier on no samples"));
    }
    if x.len() != y.len() {
        return Err(Error::dim("fit", "samples", x.len(), y.len()));
    }
    let d = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::dim("fit", "features", d, row.len()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
        return Err(Error::data(format!("label {bad} outside {num_classes} classes")));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_samples_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// CART with Gini impurity. Leaves hold class frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    root: Node,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

impl DecisionTree {
    pub fn fit(x: &[Vec<f64>], y: &[usize], num_classes: usize, cfg: &TreeConfig) -> Result<Self> {
        let d = check_training(x, y, num_classes)?;
        if cfg.min_samples_leaf == 0 {
            return Err(Error::config("min_samples_leaf must be at least 1"));
        }
        let idx: Vec<usize> = (0..x.len()).collect();
        Ok(Self {
            root: Self::grow(x, y, num_classes, d, &idx, 0, cfg),
        })
    }

    fn grow(x: &[Vec<f64>], y: &[usize], k: usize, d: usize, idx: &[usize], depth: usize, cfg: &TreeConfig) -> Node {
        let mut counts = vec![0.0; k];
        for &i in idx {
            counts[y[i]] += 1.0;
        }
        let n = idx.len() as f64;
        let leaf = || Node::Leaf(counts.iter().map(|c| c / n).collect());
        let parent = gini(&counts, n);
        if depth >= cfg.max_depth || parent == 0.0 || idx.len() < 2 * cfg.min_samples_leaf {
            return leaf();
        }
        // (impurity, feature, threshold); strict improvement keeps the first best.
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..d {
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            let mut left = vec![0.0; k];
            let mut right = counts.clone();
            for pos in 0..order.len() - 1 {
                let c = y[order[pos]];
                left[c] += 1.0;
                right[c] -= 1.0;
                let nl = pos + 1;
                let nr = order.len() - nl;
                let (a, b) = (x[order[pos]][f], x[order[pos + 1]][f]);
                if a == b || nl < cfg.min_samples_leaf || nr < cfg.min_samples_leaf {
                    continue;
                }
                let score = (nl as f64 * gini(&left, nl as f64) + nr as f64 * gini(&right, nr as f64)) / n;
                if best.is_none_or(|(s, _, _)| score < s - 1e-15) {
                    best = Some((score, f, a + (b - a) / 2.0));
                }
            }
        }
        match best {
            Some((score, feature, threshold)) if score < parent - 1e-15 => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
                Node::Split {
                    feature,
                    threshold,
                    left: Box::new(Self::grow(x, y, k, d, &l, depth + 1, cfg)),
                    right: Box::new(Self::grow(x, y, k, d, &r, depth + 1, cfg)),
                }
            }
            _ => leaf(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }
}

impl Classifier for DecisionTree {
    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(p) => return p.clone(),
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

/// Gaussian naive Bayes with per-feature variance floor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    log_prior: Vec<f64>,
    mean: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
}

impl GaussianNb {
    pub fn fit(x: &[Vec<f64>], y: &[usize], num_classes: usize, var_floor: f64) -> Result<Self> {
        let d = check_training(x, y, num_classes)?;
        let mut count = vec![0usize; num_classes];
        let mut mean = vec![vec![0.0; d]; num_classes];
        for (row, &c) in x.iter().zip(y) {
            count[c] += 1;
            for (m, v) in mean[c].iter_mut().zip(row) {
                *m += v;
            }
        }
        for (m, &n) in mean.iter_mut().zip(&count) {
            if n > 0 {
                m.iter_mut().for_each(|v| *v /= n as f64);
            }
        }
        let mut var = vec![vec![0.0; d]; num_classes];
        for (row, &c) in x.iter().zip(y) {
            for j in 0..d {
                var[c][j] += (row[j] - mean[c][j]).powi(2);
            }
        }
        for (v, &n) in var.iter_mut().zip(&count) {
            v.iter_mut().for_each(|s| *s = (*s / n.max(1) as f64).max(var_floor));
        }
        let total = x.len() as f64;
        let log_prior = count
            .iter()
            .map(|&n| if n == 0 { f64::NEG_INFINITY } else { (n as f64 / total).ln() })
            .collect();
        Ok(Self { log_prior, mean, var })
    }
}

impl Classifier for GaussianNb {
    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let logp: Vec<f64> = (0..self.log_prior.len())
            .map(|c| {
                if self.log_prior[c] == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                self.log_prior[c]
                    + x.iter()
                        .zip(&self.mean[c])
                        .zip(&self.var[c])
                        .map(|((v, m), s)| -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (v - m).powi(2) / s))
                        .sum::<f64>()
            })
            .collect();
        let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = e.iter().sum();
        e.iter().map(|v| v / z).collect()
    }
}

/// k-nearest neighbours on features z-scored with training statistics.
/// Equal distances are ordered by training index.
#[derive(Debug, Clone, PartialEq)]
pub struct KNearest {
    k: usize,
    num_classes: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl KNearest {
    pub fn fit(x: &[Vec<f64>], y: &[usize], num_classes: usize, k: usize) -> Result<Self> {
        let d = check_training(x, y, num_classes)?;
        if k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std: Vec<f64> = (0..d)
            .map(|j| {
                let s = (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        let mut model = Self {
            k,
            num_classes,
            mean,
            std,
            points: Vec::new(),
            labels: y.to_vec(),
        };
        model.points = x.iter().map(|r| model.scale(r)).collect();
        Ok(model)
    }

    fn scale(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

impl Classifier for KNearest {
    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let q = self.scale(x);
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dist.len());
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0.0; self.num_classes];
        for &(_, i) in &dist[..k] {
            votes[self.labels[i]] += 1.0 / k as f64;
        }
        votes
    }
}
