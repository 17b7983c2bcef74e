use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::InitScheme;
use crate::ndtensor::{AdamConfig, RegularizationConfig};
use crate::signals::TransformParams;
use crate::{Error, Result};

/// Confidence filter and per-class cap applied to teacher outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionPolicy {
    pub confidence_threshold: f64,
    pub per_class_cap: usize,
    /// Rank every class independently, letting one window enter several
    /// classes. Off by default: each window competes only for its argmax class.
    pub allow_multiclass_selection: bool,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.5,
            per_class_cap: 10_000,
            allow_multiclass_selection: false,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        let c = self.confidence_threshold;
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::config(format!("selection.confidence_threshold must be in (0, 1], got {c}")));
        }
        if self.per_class_cap == 0 {
            return Err(Error::config("selection.per_class_cap must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSchedule {
    pub teacher_epochs: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self {
            teacher_epochs: 30,
            pretrain_epochs: 30,
            finetune_epochs: 30,
            batch_size: 64,
            patience: 5,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("teacher_epochs", self.teacher_epochs),
            ("pretrain_epochs", self.pretrain_epochs),
            ("finetune_epochs", self.finetune_epochs),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(Error::config(format!("schedule.{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    FullySupervised,
    TransformationDiscrimination,
    SelfTraining,
    TransformationKnowledgeDistillation,
    #[serde(rename = "selfhar")]
    SelfHar,
}

impl Configuration {
    pub const ALL: [Configuration; 5] = [
        Self::FullySupervised,
        Self::TransformationDiscrimination,
        Self::SelfTraining,
        Self::TransformationKnowledgeDistillation,
        Self::SelfHar,
    ];

    /// Pipeline components used:
    /// 0 transformation-discrimination pre-training of the teacher,
    /// 1 supervised training on the labeled set,
    /// 2 self-labeling of the mixed pool,
    /// 3 signal-transformation augmentation of the selected set,
    /// 4 student pre-training and fine-tuning.
    pub fn components(self) -> BTreeSet<u8> {
        let c: &[u8] = match self {
            Self::FullySupervised => &[1],
            Self::TransformationDiscrimination => &[0, 1],
            Self::SelfTraining => &[1, 2, 4],
            Self::TransformationKnowledgeDistillation => &[0, 1, 2, 4],
            Self::SelfHar => &[1, 2, 3, 4],
        };
        c.iter().copied().collect()
    }

    pub fn needs_unlabeled(self) -> bool {
        self != Self::FullySupervised
    }

    pub fn has_teacher_student(self) -> bool {
        self.components().contains(&2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FullySupervised => "fully_supervised",
            Self::TransformationDiscrimination => "transformation_discrimination",
            Self::SelfTraining => "self_training",
            Self::TransformationKnowledgeDistillation => "transformation_knowledge_distillation",
            Self::SelfHar => "selfhar",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::config(format!("unknown configuration {name:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub configuration: Configuration,
    pub selection: SelectionPolicy,
    pub schedule: TrainingSchedule,
    pub transforms: TransformParams,
    pub adam: AdamConfig,
    pub regularization: RegularizationConfig,
    pub init: InitScheme,
    /// Fresh activity head for fine-tuning even when pre-training trained one.
    pub reinit_har_head: bool,
    /// One 256-unit layer shared by all discrimination heads.
    pub shared_td_hidden: bool,
    /// Upper bound on windows drawn from the mixed pool for
    /// transformation-only pre-training (before the ninefold augmentation).
    pub pretrain_pool_cap: Option<usize>,
    /// Fraction of the selected set held out to early-stop student pre-training.
    pub pretrain_validation_fraction: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            configuration: Configuration::SelfHar,
            selection: SelectionPolicy::default(),
            schedule: TrainingSchedule::default(),
            transforms: TransformParams::default(),
            adam: AdamConfig::default(),
            regularization: RegularizationConfig::default(),
            init: InitScheme::GlorotUniform,
            reinit_har_head: false,
            shared_td_hidden: false,
            pretrain_pool_cap: None,
            pretrain_validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.selection.validate()?;
        self.schedule.validate()?;
        self.transforms.validate()?;
        let f = self.pretrain_validation_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config(format!("pretrain_validation_fraction must be in (0, 1), got {f}")));
        }
        if self.pretrain_pool_cap == Some(0) {
            return Err(Error::config("pretrain_pool_cap must be at least 1 when set"));
        }
        if self.regularization.l2_factor < 0.0 || !self.regularization.l2_factor.is_finite() {
            return Err(Error::config("regularization.l2_factor must be a nonnegative number"));
        }
        if self.adam.learning_rate <= 0.0 {
            return Err(Error::config("adam.learning_rate must be positive"));
        }
        Ok(())
    }
}
