use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dim("ConfusionMatrix::new", "labels", truth.len(), predicted.len()));
        }
        let mut counts = vec![vec![0u64; num_classes]; num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::data(format!("label {} outside {num_classes} classes", t.max(p))));
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != k) {
            return Err(Error::dim("ConfusionMatrix::from_counts", "columns", k, row.len()));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.counts
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, &c)| i == j || c == 0))
    }

    /// F1 per class; a zero denominator gives 0.
    pub fn per_class_f1(&self) -> Vec<f64> {
        let k = self.num_classes();
        (0..k)
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let predicted: u64 = (0..k).map(|r| self.counts[r][c]).sum();
                let actual = self.support(c);
                let denom = predicted as f64 + actual as f64;
                if denom == 0.0 {
                    0.0
                } else {
                    2.0 * tp / denom
                }
            })
            .collect()
    }

    pub fn weighted_f1(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        self.per_class_f1()
            .iter()
            .enumerate()
            .map(|(c, f)| f * self.support(c) as f64)
            .sum::<f64>()
            / n as f64
    }

    /// Mean F1 over classes that occur in the true labels.
    pub fn macro_f1(&self) -> f64 {
        let f1 = self.per_class_f1();
        let present: Vec<f64> = (0..self.num_classes())
            .filter(|&c| self.support(c) > 0)
            .map(|c| f1[c])
            .collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        (0..self.num_classes()).map(|c| self.counts[c][c]).sum::<u64>() as f64 / n as f64
    }

    /// (p_o − p_e)/(1 − p_e), or 0 when p_e = 1.
    pub fn cohens_kappa(&self) -> f64 {
        let n = self.total() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let k = self.num_classes();
        let p_o = self.accuracy();
        let p_e: f64 = (0..k)
            .map(|c| {
                let row = self.support(c) as f64;
                let col: u64 = (0..k).map(|r| self.counts[r][c]).sum();
                row * col as f64
            })
            .sum::<f64>()
            / (n * n);
        if (1.0 - p_e).abs() < f64::EPSILON {
            0.0
        } else {
            (p_o - p_e) / (1.0 - p_e)
        }
    }

    pub fn as_f64(&self) -> Vec<Vec<f64>> {
        self.counts.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    WeightedF1,
    MacroF1,
    CohensKappa,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::WeightedF1, Metric::MacroF1, Metric::CohensKappa];

    pub fn of(self, cm: &ConfusionMatrix) -> f64 {
        match self {
            Metric::WeightedF1 => cm.weighted_f1(),
            Metric::MacroF1 => cm.macro_f1(),
            Metric::CohensKappa => cm.cohens_kappa(),
        }
    }

    pub fn compute(self, truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<f64> {
        Ok(self.of(&ConfusionMatrix::new(truth, predicted, num_classes)?))
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::WeightedF1 => "weighted_f1",
            Metric::MacroF1 => "macro_f1",
            Metric::CohensKappa => "cohens_kappa",
        }
    }
}

pub fn weighted_f1(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<f64> {
    Metric::WeightedF1.compute(truth, predicted, num_classes)
}

pub fn macro_f1(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<f64> {
    Metric::MacroF1.compute(truth, predicted, num_classes)
}

pub fn cohens_kappa(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<f64> {
    Metric::CohensKappa.compute(truth, predicted, num_classes)
}

/// Elementwise mean of confusion matrices (e.g. over repeated runs).
pub fn mean_confusion(matrices: &[ConfusionMatrix]) -> Result<Vec<Vec<f64>>> {
    let first = matrices.first().ok_or_else(|| Error::data("no confusion matrices to average"))?;
    let k = first.num_classes();
    let mut out = vec![vec![0.0; k]; k];
    for m in matrices {
        if m.num_classes() != k {
            return Err(Error::dim("mean_confusion", "classes", k, m.num_classes()));
        }
        for (o, r) in out.iter_mut().zip(m.counts()) {
            for (x, &c) in o.iter_mut().zip(r) {
                *x += c as f64;
            }
        }
    }
    let n = matrices.len() as f64;
    out.iter_mut().flatten().for_each(|x| *x /= n);
    Ok(out)
}

/// Elementwise `a − b`.
pub fn delta_confusion(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if a.len() != b.len() {
        return Err(Error::dim("delta_confusion", "rows", a.len(), b.len()));
    }
    a.iter()
        .zip(b)
        .map(|(ra, rb)| {
            if ra.len() != rb.len() {
                return Err(Error::dim("delta_confusion", "columns", ra.len(), rb.len()));
            }
            Ok(ra.iter().zip(rb).map(|(x, y)| x - y).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 2, 1];
        assert_eq!(weighted_f1(&t, &t, 3).unwrap(), 1.0);
        assert_eq!(macro_f1(&t, &t, 3).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&t, &t, 3).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_binary_case() {
        // TP=1, FN=1, FP=1, TN=1 for class 1.
        let t = [1, 1, 0, 0];
        let p = [1, 0, 1, 0];
        let cm = ConfusionMatrix::new(&t, &p, 2).unwrap();
        assert_eq!(cm.per_class_f1(), vec![0.5, 0.5]);
        assert_eq!(cm.macro_f1(), 0.5);
        assert_eq!(cm.weighted_f1(), 0.5);
        assert_eq!(cm.cohens_kappa(), 0.0);
    }

    #[test]
    fn absent_classes_do_not_dilute_macro() {
        let t = [0, 0, 1];
        let p = [0, 0, 1];
        assert_eq!(macro_f1(&t, &p, 5).unwrap(), 1.0);
    }

    #[test]
    fn kappa_zero_when_chance_agreement_is_total() {
        let t = [0, 0, 0];
        assert_eq!(cohens_kappa(&t, &t, 2).unwrap(), 0.0);
    }

    #[test]
    fn delta_is_antisymmetric_and_zero_on_self() {
        let a = vec![vec![3.0, 1.0], vec![0.5, 2.0]];
        let b = vec![vec![1.0, 2.0], vec![1.5, 1.0]];
        let d = delta_confusion(&a, &b).unwrap();
        assert_eq!(d, vec![vec![2.0, -1.0], vec![-1.0, 1.0]]);
        let r = delta_confusion(&b, &a).unwrap();
        assert!(d.iter().flatten().zip(r.iter().flatten()).all(|(x, y)| *x == -*y));
        assert!(delta_confusion(&a, &a).unwrap().iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn length_mismatch_is_dimension_error() {
        assert!(matches!(weighted_f1(&[0, 1], &[0], 2), Err(Error::Dimension { .. })));
    }
}
