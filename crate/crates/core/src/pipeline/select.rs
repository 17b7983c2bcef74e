use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SelectionPolicy;
use crate::datakit::{Dataset, Role};
use crate::evalkit::percentile;
use crate::model::ModelParameters;
use crate::{Error, Result};

/// One selected window and the class it was selected for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub class: usize,
    pub confidence: f64,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Per-class confidence filtering and top-K ranking over teacher outputs.
/// Results are grouped by class; within a class, by descending confidence
/// then ascending index.
pub fn select_confident(probs: &[Vec<f64>], num_classes: usize, policy: &SelectionPolicy) -> Result<Vec<Selection>> {
    policy.validate()?;
    if let Some(p) = probs.iter().find(|p| p.len() != num_classes) {
        return Err(Error::dim("select_confident", "classes", num_classes, p.len()));
    }
    let winners: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let mut out = Vec::new();
    for class in 0..num_classes {
        let mut candidates: Vec<Selection> = probs
            .iter()
            .enumerate()
            .filter(|&(i, p)| {
                (policy.allow_multiclass_selection || winners[i] == class)
                    && p[class] >= policy.confidence_threshold
            })
            .map(|(index, p)| Selection {
                index,
                class,
                confidence: p[class],
            })
            .collect();
        candidates.sort_by(|a, b| {
            b.confidence
                .partial_cmp(&a.confidence)
                .unwrap_or(Ordering::Equal)
                .then(a.index.cmp(&b.index))
        });
        candidates.truncate(policy.per_class_cap);
        out.extend(candidates);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSelectionStats {
    pub class: String,
    /// Windows whose confidence for this class cleared the threshold.
    pub eligible: usize,
    pub selected: usize,
    pub confidence_min: Option<f64>,
    pub confidence_q25: Option<f64>,
    pub confidence_median: Option<f64>,
    pub confidence_q75: Option<f64>,
    pub confidence_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub pool_size: usize,
    pub per_class: Vec<ClassSelectionStats>,
}

impl SelectionStats {
    pub fn total_selected(&self) -> usize {
        self.per_class.iter().map(|c| c.selected).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "class", "eligible", "selected", "conf_min", "conf_q25", "conf_median", "conf_q75", "conf_max",
        ])?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.per_class {
            w.write_record([
                c.class.clone(),
                c.eligible.to_string(),
                c.selected.to_string(),
                fmt(c.confidence_min),
                fmt(c.confidence_q25),
                fmt(c.confidence_median),
                fmt(c.confidence_q75),
                fmt(c.confidence_max),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn stats_for(
    probs: &[Vec<f64>],
    selections: &[Selection],
    policy: &SelectionPolicy,
    vocabulary: &[String],
) -> SelectionStats {
    let per_class = vocabulary
        .iter()
        .enumerate()
        .map(|(class, name)| {
            let eligible = probs
                .iter()
                .filter(|p| {
                    (policy.allow_multiclass_selection || argmax(p) == class)
                        && p[class] >= policy.confidence_threshold
                })
                .count();
            let mut conf: Vec<f64> = selections
                .iter()
                .filter(|s| s.class == class)
                .map(|s| s.confidence)
                .collect();
            conf.sort_by(f64::total_cmp);
            let q = |p: f64| (!conf.is_empty()).then(|| percentile(&conf, p));
            ClassSelectionStats {
                class: name.clone(),
                eligible,
                selected: conf.len(),
                confidence_min: conf.first().copied(),
                confidence_q25: q(25.0),
                confidence_median: q(50.0),
                confidence_q75: q(75.0),
                confidence_max: conf.last().copied(),
            }
        })
        .collect();
    SelectionStats {
        pool_size: probs.len(),
        per_class,
    }
}

/// Runs the teacher over the label-stripped pool and keeps confident windows,
/// each carrying the teacher's full softmax vector as its soft label.
pub fn self_label_and_select(
    teacher: &ModelParameters,
    mixed: &Dataset,
    policy: &SelectionPolicy,
) -> Result<(Dataset, SelectionStats)> {
    if mixed.role() != Role::Mixed && mixed.role() != Role::Unlabeled {
        return Err(Error::config("self-labeling expects a label-stripped pool"));
    }
    let k = teacher.num_classes();
    if mixed.num_classes() != k {
        return Err(Error::dim("self_label_and_select", "classes", k, mixed.num_classes()));
    }
    let probs: Vec<Vec<f64>> = mixed
        .windows()
        .iter()
        .map(|w| {
            teacher
                .predict(w.values())?
                .class_probs
                .ok_or_else(|| Error::config("teacher has no classifier head"))
        })
        .collect::<Result<_>>()?;
    let selections = select_confident(&probs, k, policy)?;
    let stats = stats_for(&probs, &selections, policy, mixed.label_vocabulary());
    let windows = selections
        .iter()
        .map(|s| {
            let mut w = mixed.windows()[s.index].clone();
            w.label = None;
            w.soft_label = Some(probs[s.index].clone());
            w
        })
        .collect();
    let selected = Dataset::new(windows, mixed.label_vocabulary().to_vec(), Role::Selected)?;
    Ok((selected, stats))
}
