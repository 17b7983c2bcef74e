use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Timesteps per window.
pub const WINDOW_LEN: usize = 400;
/// Triaxial accelerometer channels.
pub const CHANNELS: usize = 3;

/// One continuous accelerometer stream of a single user.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub user_id: String,
    pub timestamps_ms: Vec<f64>,
    pub samples: Vec<[f64; CHANNELS]>,
    /// Per-sample activity names; `None` for unlabeled recordings, and a
    /// `None` entry for an unannotated sample.
    pub labels: Option<Vec<Option<String>>>,
    pub sampling_rate_hz: f64,
}

impl RawRecording {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks lengths and strictly increasing timestamps.
    pub fn validate(&self) -> Result<()> {
        if self.timestamps_ms.len() != self.samples.len() {
            return Err(Error::dim("RawRecording", "timestamps", self.samples.len(), self.timestamps_ms.len()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.samples.len() {
                return Err(Error::dim("RawRecording", "labels", self.samples.len(), labels.len()));
            }
        }
        if let Some(i) = self.timestamps_ms.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::data(format!(
                "user {}: timestamps not strictly increasing at sample {}",
                self.user_id,
                i + 1
            )));
        }
        Ok(())
    }
}

/// A `timesteps × 3` segment, row-major, with its user and optional labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    values: Vec<f64>,
    pub user_id: String,
    pub label: Option<usize>,
    pub soft_label: Option<Vec<f64>>,
}

impl Window {
    pub fn new(values: Vec<f64>, user_id: impl Into<String>, label: Option<usize>) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(CHANNELS) {
            return Err(Error::dim("Window::new", "values", CHANNELS, values.len() % CHANNELS));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("window contains non-finite values"));
        }
        Ok(Self {
            values,
            user_id: user_id.into(),
            label,
            soft_label: None,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timesteps(&self) -> usize {
        self.values.len() / CHANNELS
    }

    pub fn sample(&self, t: usize) -> [f64; CHANNELS] {
        let s = &self.values[t * CHANNELS..(t + 1) * CHANNELS];
        [s[0], s[1], s[2]]
    }

    /// Copy of this window (user, labels) carrying new values of the same shape.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::dim("Window::with_values", "values", self.values.len(), values.len()));
        }
        let mut w = Window::new(values, self.user_id.clone(), self.label)?;
        w.soft_label = self.soft_label.clone();
        Ok(w)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Provenance of a dataset within the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Ground-truth labeled windows (D).
    Labeled,
    /// Unlabeled pool (U).
    Unlabeled,
    /// Label-stripped union of D and U (W).
    Mixed,
    /// Teacher-selected windows with soft labels (S).
    Selected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    windows: Vec<Window>,
    label_vocabulary: Vec<String>,
    role: Role,
}

impl Dataset {
    pub fn new(windows: Vec<Window>, label_vocabulary: Vec<String>, role: Role) -> Result<Self> {
        if role == Role::Labeled && label_vocabulary.is_empty() {
            return Err(Error::config("labeled dataset needs a non-empty label vocabulary"));
        }
        if let Some(first) = windows.first() {
            let len = first.values().len();
            if let Some(w) = windows.iter().find(|w| w.values().len() != len) {
                return Err(Error::dim("Dataset::new", "window length", len, w.values().len()));
            }
        }
        for w in &windows {
            if let Some(l) = w.label {
                if l >= label_vocabulary.len() {
                    return Err(Error::data(format!(
                        "label index {l} outside vocabulary of {}",
                        label_vocabulary.len()
                    )));
                }
            }
            if role == Role::Labeled && w.label.is_none() {
                return Err(Error::data(format!("labeled dataset has an unlabeled window (user {})", w.user_id)));
            }
            if matches!(role, Role::Mixed | Role::Selected) && w.label.is_some() {
                return Err(Error::data("mixed and selected datasets must not carry ground-truth labels"));
            }
        }
        Ok(Self {
            windows,
            label_vocabulary,
            role,
        })
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn into_windows(self) -> Vec<Window> {
        self.windows
    }

    pub fn label_vocabulary(&self) -> &[String] {
        &self.label_vocabulary
    }

    pub fn num_classes(&self) -> usize {
        self.label_vocabulary.len()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Sorted distinct user ids.
    pub fn users(&self) -> Vec<String> {
        self.windows
            .iter()
            .map(|w| w.user_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Ground-truth label counts per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for l in self.windows.iter().filter_map(|w| w.label) {
            counts[l] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.windows.iter().filter_map(|w| w.label).collect()
    }

    /// Windows at `indices`, keeping vocabulary and role.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let windows = indices.iter().map(|&i| self.windows[i].clone()).collect();
        Dataset::new(windows, self.label_vocabulary.clone(), self.role)
    }

    /// Windows passing `keep`, keeping vocabulary and role.
    pub fn filter(&self, keep: impl Fn(&Window) -> bool) -> Result<Self> {
        let windows = self.windows.iter().filter(|w| keep(w)).cloned().collect();
        Dataset::new(windows, self.label_vocabulary.clone(), self.role)
    }

    /// Drops ground-truth and soft labels and re-tags the role.
    pub fn strip_labels(&self, role: Role) -> Result<Self> {
        let windows = self
            .windows
            .iter()
            .map(|w| {
                let mut w = w.clone();
                w.label = None;
                w.soft_label = None;
                w
            })
            .collect();
        Dataset::new(windows, self.label_vocabulary.clone(), role)
    }

    /// Label-stripped union `labeled ∪ unlabeled` (the mixed pool W).
    pub fn mix(labeled: &Dataset, unlabeled: &Dataset) -> Result<Self> {
        let mut windows = labeled.strip_labels(Role::Mixed)?.windows;
        windows.extend(unlabeled.strip_labels(Role::Mixed)?.windows);
        Dataset::new(windows, labeled.label_vocabulary.clone(), Role::Mixed)
    }

    pub(crate) fn windows_mut(&mut self) -> &mut [Window] {
        &mut self.windows
    }
}

/// Sorted distinct activity names across labeled recordings.
pub fn vocabulary_of(recordings: &[RawRecording]) -> Vec<String> {
    recordings
        .iter()
        .filter_map(|r| r.labels.as_ref())
        .flatten()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
