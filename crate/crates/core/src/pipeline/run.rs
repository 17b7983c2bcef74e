use std::fs;
use std::path::Path;

use log::info;

use super::train::{fit, record_examples, train_supervised, window_examples, write_history_csv, FitOptions, History};
use super::{self_label_and_select, Configuration, PipelineConfig, SelectionStats};
use crate::datakit::{Dataset, Role};
use crate::model::{save_weights, ModelParameters};
use crate::rng::{self, derive_seed};
use crate::signals::{build_multitask_dataset, build_transformation_dataset};
use crate::{Error, Result};

/// Labeled train and validation partitions plus the optional unlabeled pool.
#[derive(Debug, Clone, Copy)]
pub struct PipelineData<'a> {
    pub train: &'a Dataset,
    pub validation: &'a Dataset,
    pub unlabeled: Option<&'a Dataset>,
}

/// Everything one configuration produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub configuration: Configuration,
    pub final_model: ModelParameters,
    pub teacher: Option<ModelParameters>,
    /// Pre-trained model before fine-tuning, if the configuration has one.
    pub student: Option<ModelParameters>,
    pub histories: Vec<History>,
    pub selection: Option<SelectionStats>,
}

impl RunOutcome {
    /// Model whose core stands for the learned representation: the
    /// pre-trained model when there is one, otherwise the final model.
    pub fn representation(&self) -> &ModelParameters {
        self.student.as_ref().unwrap_or(&self.final_model)
    }

    /// Writes weights, `history.csv` and `selection_stats.csv` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        if let Some(t) = &self.teacher {
            save_weights(t, &dir.join("teacher.weights"))?;
        }
        if let Some(s) = &self.student {
            save_weights(s, &dir.join("student.weights"))?;
        }
        save_weights(&self.final_model, &dir.join("final.weights"))?;
        write_history_csv(&self.histories, &dir.join("history.csv"))?;
        if let Some(s) = &self.selection {
            s.write_csv(&dir.join("selection_stats.csv"))?;
        }
        Ok(())
    }
}

/// Splits `ds` into (train, validation) with `fraction` of windows held out,
/// at least one on each side.
pub fn holdout_split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    use rand::seq::SliceRandom;
    if ds.len() < 2 {
        return Err(Error::data(format!(
            "need at least 2 windows to hold out a validation split, got {}",
            ds.len()
        )));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let n_val = ((ds.len() as f64 * fraction).round() as usize).clamp(1, ds.len() - 1);
    let (val, train) = idx.split_at(n_val);
    let (mut train, mut val) = (train.to_vec(), val.to_vec());
    train.sort_unstable();
    val.sort_unstable();
    Ok((ds.select(&train)?, ds.select(&val)?))
}

fn require_unlabeled<'a>(cfg: &PipelineConfig, data: &PipelineData<'a>) -> Result<&'a Dataset> {
    let u = data.unlabeled.ok_or_else(|| {
        Error::config(format!(
            "configuration {} requires an unlabeled dataset",
            cfg.configuration.name()
        ))
    })?;
    if u.num_classes() != data.train.num_classes() && u.num_classes() != 0 {
        return Err(Error::data("unlabeled pool vocabulary differs from the labeled set"));
    }
    Ok(u)
}

fn mixed_pool(data: &PipelineData, unlabeled: &Dataset) -> Result<Dataset> {
    let u = Dataset::new(
        unlabeled.strip_labels(Role::Unlabeled)?.into_windows(),
        data.train.label_vocabulary().to_vec(),
        Role::Unlabeled,
    )?;
    Dataset::mix(data.train, &u)
}

/// Supervised teacher on the labeled set. Seeds depend only on the run seed,
/// so every configuration trains an identical teacher.
pub fn train_teacher(cfg: &PipelineConfig, data: &PipelineData) -> Result<(ModelParameters, History)> {
    let mut teacher = ModelParameters::har(data.train.num_classes(), cfg.init, derive_seed(cfg.seed, "teacher.init"))?;
    let opts = FitOptions::from_config(cfg, cfg.schedule.teacher_epochs, derive_seed(cfg.seed, "teacher.fit"));
    let history = train_supervised(&mut teacher, data.train, data.validation, &opts, "teacher")?;
    Ok((teacher, history))
}

/// Transformation-discrimination pre-training on the (optionally capped)
/// mixed pool; the model has discrimination heads only.
pub fn pretrain_transformation(cfg: &PipelineConfig, mixed: &Dataset, stage: &str) -> Result<(ModelParameters, History)> {
    let pool = match cfg.pretrain_pool_cap {
        Some(cap) if cap < mixed.len() => {
            let mut r = rng::seeded(derive_seed(cfg.seed, &format!("{stage}.pool")));
            let mut idx = rand::seq::index::sample(&mut r, mixed.len(), cap).into_vec();
            idx.sort_unstable();
            mixed.select(&idx)?
        }
        _ => mixed.clone(),
    };
    let (train, val) = holdout_split(&pool, cfg.pretrain_validation_fraction, derive_seed(cfg.seed, &format!("{stage}.split")))?;
    let aug_seed = derive_seed(cfg.seed, &format!("{stage}.augment"));
    let train_records = build_transformation_dataset(&train, &cfg.transforms, aug_seed)?;
    let val_records = build_transformation_dataset(&val, &cfg.transforms, derive_seed(aug_seed, "validation"))?;
    let mut model = ModelParameters::transformation(
        mixed.num_classes(),
        cfg.init,
        cfg.shared_td_hidden,
        derive_seed(cfg.seed, &format!("{stage}.init")),
    )?;
    let opts = FitOptions::from_config(cfg, cfg.schedule.pretrain_epochs, derive_seed(cfg.seed, &format!("{stage}.fit")));
    let history = fit(
        &mut model,
        &record_examples(&train_records, false)?,
        &record_examples(&val_records, false)?,
        &opts,
        stage,
    )?;
    Ok((model, history))
}

/// Pre-trains a student on the selected set. With `augment`, the student is
/// the nine-task model trained on the transformed copies; otherwise a plain
/// activity model trained on the soft labels alone.
pub fn pretrain_student(cfg: &PipelineConfig, selected: &Dataset, augment: bool) -> Result<(ModelParameters, History)> {
    let (train, val) = holdout_split(selected, cfg.pretrain_validation_fraction, derive_seed(cfg.seed, "student.split"))?;
    let k = selected.num_classes();
    let init_seed = derive_seed(cfg.seed, "student.init");
    let opts = FitOptions::from_config(cfg, cfg.schedule.pretrain_epochs, derive_seed(cfg.seed, "student.fit"));
    if augment {
        let aug_seed = derive_seed(cfg.seed, "student.augment");
        let train_records = build_multitask_dataset(&train, &cfg.transforms, aug_seed)?;
        let val_records = build_multitask_dataset(&val, &cfg.transforms, derive_seed(aug_seed, "validation"))?;
        let mut model = ModelParameters::multitask(k, cfg.init, cfg.shared_td_hidden, init_seed)?;
        let history = fit(
            &mut model,
            &record_examples(&train_records, true)?,
            &record_examples(&val_records, true)?,
            &opts,
            "student",
        )?;
        Ok((model, history))
    } else {
        let mut model = ModelParameters::har(k, cfg.init, init_seed)?;
        let history = fit(&mut model, &window_examples(&train)?, &window_examples(&val)?, &opts, "student")?;
        Ok((model, history))
    }
}

/// Drops discrimination heads, attaches an activity head when needed (or when
/// `fresh_head`), freezes conv layers 1–2 and trains on the labeled set.
pub fn finetune_student(
    cfg: &PipelineConfig,
    student: &mut ModelParameters,
    data: &PipelineData,
    fresh_head: bool,
    epochs: usize,
    stage: &str,
) -> Result<History> {
    student.detach_td_heads();
    if fresh_head || student.classifier().is_none() {
        student.attach_har_head(cfg.init, derive_seed(cfg.seed, &format!("{stage}.head")));
    }
    student.freeze_for_finetune();
    let opts = FitOptions::from_config(cfg, epochs, derive_seed(cfg.seed, &format!("{stage}.fit")));
    let history = train_supervised(student, data.train, data.validation, &opts, stage);
    student.unfreeze_all();
    history
}

/// Runs one configuration end to end. `teacher`, if given, must be the
/// supervised teacher of this config and seed (for example the final model of
/// a FullySupervised run); it replaces retraining.
pub fn run_configuration(cfg: &PipelineConfig, data: &PipelineData, teacher: Option<&ModelParameters>) -> Result<RunOutcome> {
    cfg.validate()?;
    if data.train.role() != Role::Labeled || data.validation.role() != Role::Labeled {
        return Err(Error::config("train and validation partitions must be labeled datasets"));
    }
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::config("train and validation partitions must be non-empty"));
    }
    let conf = cfg.configuration;
    info!("running configuration {} (seed {})", conf.name(), cfg.seed);
    let mut histories = Vec::new();
    let supervised_teacher = |histories: &mut Vec<History>| -> Result<ModelParameters> {
        match teacher {
            Some(t) => {
                if t.num_classes() != data.train.num_classes() || t.td_heads().is_some() {
                    return Err(Error::config("supplied teacher does not match the labeled set"));
                }
                Ok(t.clone())
            }
            None => {
                let (t, h) = train_teacher(cfg, data)?;
                histories.push(h);
                Ok(t)
            }
        }
    };

    let outcome = match conf {
        Configuration::FullySupervised => {
            let t = supervised_teacher(&mut histories)?;
            RunOutcome {
                configuration: conf,
                final_model: t,
                teacher: None,
                student: None,
                histories,
                selection: None,
            }
        }
        Configuration::TransformationDiscrimination => {
            let u = require_unlabeled(cfg, data)?;
            let mixed = mixed_pool(data, u)?;
            let (pretrained, h) = pretrain_transformation(cfg, &mixed, "td_pretrain")?;
            histories.push(h);
            let mut model = pretrained.clone();
            histories.push(finetune_student(cfg, &mut model, data, true, cfg.schedule.finetune_epochs, "finetune")?);
            RunOutcome {
                configuration: conf,
                final_model: model,
                teacher: None,
                student: Some(pretrained),
                histories,
                selection: None,
            }
        }
        Configuration::SelfTraining | Configuration::SelfHar | Configuration::TransformationKnowledgeDistillation => {
            let u = require_unlabeled(cfg, data)?;
            let mixed = mixed_pool(data, u)?;
            let t = if conf == Configuration::TransformationKnowledgeDistillation {
                let (mut t, h) = pretrain_transformation(cfg, &mixed, "teacher_td_pretrain")?;
                histories.push(h);
                histories.push(finetune_student(cfg, &mut t, data, true, cfg.schedule.teacher_epochs, "teacher")?);
                t
            } else {
                supervised_teacher(&mut histories)?
            };
            let (selected, stats) = self_label_and_select(&t, &mixed, &cfg.selection)?;
            info!("selected {} of {} pooled windows", selected.len(), mixed.len());
            if selected.len() < 2 {
                return Err(Error::data(format!(
                    "teacher selected {} windows at confidence threshold {}; need at least 2",
                    selected.len(),
                    cfg.selection.confidence_threshold
                )));
            }
            let augment = conf == Configuration::SelfHar;
            let (student, h) = pretrain_student(cfg, &selected, augment)?;
            histories.push(h);
            let mut model = student.clone();
            histories.push(finetune_student(
                cfg,
                &mut model,
                data,
                cfg.reinit_har_head,
                cfg.schedule.finetune_epochs,
                "finetune",
            )?);
            RunOutcome {
                configuration: conf,
                final_model: model,
                teacher: Some(t),
                student: Some(student),
                histories,
                selection: Some(stats),
            }
        }
    };
    Ok(outcome)
}
