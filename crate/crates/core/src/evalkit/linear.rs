use std::path::Path;

use super::{evaluate_model, MetricsReport};
use crate::datakit::Dataset;
use crate::model::{ModelParameters, FEATURE_DIM};
use crate::pipeline::{train_supervised, FitOptions, History};
use crate::Result;

/// Result of training a linear head on a frozen core.
#[derive(Debug, Clone)]
pub struct LinearEvaluation {
    pub model: ModelParameters,
    pub history: History,
    pub report: MetricsReport,
}

/// Freezes the whole core of `pretrained`, replaces its heads with a
/// Gaussian(0, 0.01²) linear classifier, trains only that head and evaluates.
#[allow(clippy::too_many_arguments)]
pub fn linear_evaluate(
    pretrained: &ModelParameters,
    train: &Dataset,
    validation: &Dataset,
    test: &Dataset,
    opts: &FitOptions,
    head_seed: u64,
    n_resamples: usize,
    report_seed: u64,
) -> Result<LinearEvaluation> {
    let mut model = pretrained.clone();
    model.detach_td_heads();
    model.attach_linear_head(head_seed);
    model.freeze_core_full();
    let history = train_supervised(&mut model, train, validation, opts, "linear")?;
    let report = evaluate_model(&model, test, n_resamples, report_seed)?;
    Ok(LinearEvaluation { model, history, report })
}

/// One CSV row per window: user, label name (blank when unlabeled) and the
/// pooled core features.
pub fn export_embeddings(model: &ModelParameters, dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["user_id".to_string(), "label".to_string()];
    header.extend((0..FEATURE_DIM).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for win in dataset.windows() {
        let features = model.features(win.values())?;
        let mut row = vec![
            win.user_id.clone(),
            win.label
                .map(|l| dataset.label_vocabulary()[l].clone())
                .unwrap_or_default(),
        ];
        row.extend(features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
