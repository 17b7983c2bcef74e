//! Classification metrics, percentile-bootstrap intervals, confusion deltas,
//! the linear evaluation protocol and embedding export.

mod bootstrap;
mod linear;
mod metrics;
mod report;

pub use bootstrap::{
    bootstrap_ci, bootstrap_ci_with_log, mean_bootstrap_ci, percentile, resample_indices, Interval,
};
pub use linear::{export_embeddings, linear_evaluate, LinearEvaluation};
pub use metrics::{
    cohens_kappa, delta_confusion, macro_f1, mean_confusion, weighted_f1, ConfusionMatrix, Metric,
};
pub use report::{
    evaluate_model, predict_labels, MetricEstimate, MetricsReport, CONFIDENCE_LEVEL, DEFAULT_RESAMPLES,
};
