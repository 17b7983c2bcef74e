use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{bootstrap_ci_with_log, resample_indices, ConfusionMatrix, Metric};
use crate::datakit::Dataset;
use crate::model::ModelParameters;
use crate::pipeline::argmax;
use crate::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const CONFIDENCE_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricEstimate {
    pub point: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Point estimates and bootstrap intervals on one test set; the on-disk
/// `report.json` schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub weighted_f1: MetricEstimate,
    pub macro_f1: MetricEstimate,
    pub cohens_kappa: MetricEstimate,
    pub confusion: Vec<Vec<u64>>,
    pub n_test: usize,
    pub n_resamples: usize,
    pub seed: u64,
}

impl MetricsReport {
    /// All three metrics share one resample-index log.
    pub fn compute(truth: &[usize], predicted: &[usize], num_classes: usize, n_resamples: usize, seed: u64) -> Result<Self> {
        let cm = ConfusionMatrix::new(truth, predicted, num_classes)?;
        if truth.is_empty() {
            return Err(Error::data("cannot report metrics on an empty test set"));
        }
        let log = resample_indices(truth.len(), n_resamples, seed);
        let est = |m: Metric| -> Result<MetricEstimate> {
            let ci = bootstrap_ci_with_log(truth, predicted, num_classes, m, &log, CONFIDENCE_LEVEL)?;
            Ok(MetricEstimate {
                point: m.of(&cm),
                ci_lo: ci.lo,
                ci_hi: ci.hi,
            })
        };
        Ok(Self {
            weighted_f1: est(Metric::WeightedF1)?,
            macro_f1: est(Metric::MacroF1)?,
            cohens_kappa: est(Metric::CohensKappa)?,
            confusion: cm.counts().to_vec(),
            n_test: truth.len(),
            n_resamples,
            seed,
        })
    }

    pub fn metric(&self, m: Metric) -> MetricEstimate {
        match m {
            Metric::WeightedF1 => self.weighted_f1,
            Metric::MacroF1 => self.macro_f1,
            Metric::CohensKappa => self.cohens_kappa,
        }
    }

    pub fn confusion_matrix(&self) -> Result<ConfusionMatrix> {
        ConfusionMatrix::from_counts(self.confusion.clone())
    }

    /// Structural checks beyond the field layout.
    pub fn validate(&self) -> Result<()> {
        let cm = self.confusion_matrix()?;
        if cm.total() != self.n_test as u64 {
            return Err(Error::Format(format!(
                "confusion total {} differs from n_test {}",
                cm.total(),
                self.n_test
            )));
        }
        for m in Metric::ALL {
            let e = self.metric(m);
            let (lo, hi) = if m == Metric::CohensKappa { (-1.0, 1.0) } else { (0.0, 1.0) };
            for v in [e.point, e.ci_lo, e.ci_hi] {
                if !(v.is_finite() && v >= lo - 1e-12 && v <= hi + 1e-12) {
                    return Err(Error::Format(format!("{} value {v} out of range", m.name())));
                }
            }
            if e.ci_lo > e.ci_hi {
                return Err(Error::Format(format!("{} interval is inverted", m.name())));
            }
        }
        Ok(())
    }

    /// Parses and validates a `report.json` document.
    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("report.json: {e}")))?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Argmax predictions of a classifier model.
pub fn predict_labels(model: &ModelParameters, dataset: &Dataset) -> Result<Vec<usize>> {
    dataset
        .windows()
        .iter()
        .map(|w| {
            let p = model
                .predict(w.values())?
                .class_probs
                .ok_or_else(|| Error::config("model has no classifier head"))?;
            Ok(argmax(&p))
        })
        .collect()
}

/// Predicts on a labeled test set and builds the report.
pub fn evaluate_model(model: &ModelParameters, test: &Dataset, n_resamples: usize, seed: u64) -> Result<MetricsReport> {
    let truth: Vec<usize> = test
        .windows()
        .iter()
        .map(|w| w.label.ok_or_else(|| Error::data("test window without a label")))
        .collect::<Result<_>>()?;
    if test.num_classes() != model.num_classes() {
        return Err(Error::dim("evaluate_model", "classes", model.num_classes(), test.num_classes()));
    }
    let predicted = predict_labels(model, test)?;
    MetricsReport::compute(&truth, &predicted, test.num_classes(), n_resamples, seed)
}
