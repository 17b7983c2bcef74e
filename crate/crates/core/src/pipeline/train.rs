use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::datakit::{Dataset, Window};
use crate::model::{Example, ModelParameters};
use crate::ndtensor::{adam_step, AdamConfig, AdamState, RegularizationConfig};
use crate::rng;
use crate::signals::TransformRecord;
use crate::{Error, Result};

/// Optimization settings for one training stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub regularization: RegularizationConfig,
    pub seed: u64,
}

impl FitOptions {
    pub fn from_config(cfg: &PipelineConfig, epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size: cfg.schedule.batch_size,
            patience: cfg.schedule.patience,
            adam: cfg.adam,
            regularization: cfg.regularization,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

/// Loss trajectory of one stage. Losses include the L2 term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub stage: String,
    pub initial_train_loss: f64,
    pub initial_validation_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose snapshot was returned.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

impl History {
    pub fn best_train_loss(&self) -> f64 {
        self.epochs[self.best_epoch - 1].train_loss
    }
}

/// Writes `stage,epoch,train_loss,validation_loss`; epoch 0 is the untrained model.
pub fn write_history_csv(histories: &[History], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["stage", "epoch", "train_loss", "validation_loss", "best"])?;
    for h in histories {
        w.write_record([
            h.stage.as_str(),
            "0",
            &h.initial_train_loss.to_string(),
            &h.initial_validation_loss.to_string(),
            "false",
        ])?;
        for e in &h.epochs {
            w.write_record([
                h.stage.clone(),
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.validation_loss.to_string(),
                (e.epoch == h.best_epoch).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Examples targeting each window's `soft_label`.
pub fn window_examples(ds: &Dataset) -> Result<Vec<Example<'_>>> {
    ds.windows()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let target = w
                .soft_label
                .as_deref()
                .ok_or_else(|| Error::data(format!("window {i} has no activity target")))?;
            Ok(Example {
                values: w.values(),
                har: Some(target),
                td: None,
            })
        })
        .collect()
}

/// Examples from augmented records. Activity targets are used only when
/// `with_har` is set; transformation flags always are.
pub fn record_examples(records: &[TransformRecord], with_har: bool) -> Result<Vec<Example<'_>>> {
    records
        .iter()
        .map(|r| {
            r.kind()?;
            let har = if with_har {
                Some(
                    r.har_soft_label
                        .as_deref()
                        .ok_or_else(|| Error::data("multi-task record has no activity target"))?,
                )
            } else {
                None
            };
            Ok(Example {
                values: r.window.values(),
                har,
                td: Some(r.transform_targets()),
            })
        })
        .collect()
}

/// Copy of a labeled dataset whose soft labels are the one-hot ground truth.
pub fn with_onehot_targets(ds: &Dataset) -> Result<Dataset> {
    let k = ds.num_classes();
    let windows: Vec<Window> = ds
        .windows()
        .iter()
        .map(|w| {
            let label = w
                .label
                .ok_or_else(|| Error::data(format!("window of user {} has no label", w.user_id)))?;
            let mut w = w.clone();
            let mut t = vec![0.0; k];
            t[label] = 1.0;
            w.soft_label = Some(t);
            Ok(w)
        })
        .collect::<Result<_>>()?;
    Dataset::new(windows, ds.label_vocabulary().to_vec(), ds.role())
}

/// Evaluation-mode mean data loss plus the L2 term.
pub fn mean_loss(model: &ModelParameters, examples: &[Example], reg: &RegularizationConfig) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        total += model.example_loss(ex)?;
    }
    Ok(total / examples.len() as f64 + model.l2_penalty(reg).0)
}

/// Minibatch Adam with early stopping on validation loss. On return `model`
/// holds the snapshot with the lowest validation loss.
pub fn fit(
    model: &mut ModelParameters,
    train: &[Example],
    validation: &[Example],
    opts: &FitOptions,
    stage: &str,
) -> Result<History> {
    if opts.epochs == 0 {
        return Err(Error::config(format!("{stage}: epochs must be at least 1")));
    }
    if opts.batch_size == 0 {
        return Err(Error::config(format!("{stage}: batch size must be at least 1")));
    }
    if train.is_empty() || validation.is_empty() {
        return Err(Error::config(format!(
            "{stage}: training ({}) and validation ({}) sets must be non-empty",
            train.len(),
            validation.len()
        )));
    }
    let reg = opts.regularization;
    let initial_train_loss = mean_loss(model, train, &reg)?;
    let initial_validation_loss = mean_loss(model, validation, &reg)?;
    info!("{stage}: {} train / {} validation examples, initial validation loss {initial_validation_loss:.5}",
        train.len(), validation.len());

    let mut adam = AdamState::new(opts.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(usize, f64, ModelParameters)> = None;
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut batch: Vec<Example> = Vec::with_capacity(opts.batch_size);

    for epoch in 1..=opts.epochs {
        let mut shuffle_rng = rng::stream(opts.seed, 2 * epoch as u64);
        let mut dropout_rng = rng::stream(opts.seed, 2 * epoch as u64 + 1);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i]));
            let (data_loss, mut grads) = model.batch_loss_and_gradients(&batch, true, &mut dropout_rng)?;
            let (l2, l2_grads) = model.l2_penalty(&reg);
            grads.merge(&l2_grads)?;
            adam_step(model.parameters_mut(), &grads, &mut adam)?;
            loss_sum += (data_loss + l2) * chunk.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;
        let validation_loss = mean_loss(model, validation, &reg)?;
        debug!("{stage}: epoch {epoch} train {train_loss:.5} validation {validation_loss:.5}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if best.as_ref().is_none_or(|(_, b, _)| validation_loss < *b) {
            best = Some((epoch, validation_loss, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.patience {
                stopped_early = epoch < opts.epochs;
                break;
            }
        }
    }
    let (best_epoch, best_validation_loss, snapshot) = best.expect("at least one epoch ran");
    *model = snapshot;
    info!("{stage}: best epoch {best_epoch}, validation loss {best_validation_loss:.5}");
    Ok(History {
        stage: stage.to_string(),
        initial_train_loss,
        initial_validation_loss,
        epochs,
        best_epoch,
        best_validation_loss,
        stopped_early,
    })
}

/// Trains on ground-truth labels with the categorical cross-entropy.
pub fn train_supervised(
    model: &mut ModelParameters,
    train: &Dataset,
    validation: &Dataset,
    opts: &FitOptions,
    stage: &str,
) -> Result<History> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::config(format!("{stage}: labeled training and validation sets must be non-empty")));
    }
    if model.classifier().is_none() {
        return Err(Error::config(format!("{stage}: model has no classifier head")));
    }
    let train = with_onehot_targets(train)?;
    let validation = with_onehot_targets(validation)?;
    fit(model, &window_examples(&train)?, &window_examples(&validation)?, opts, stage)
}

