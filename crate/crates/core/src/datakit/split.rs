use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{rng, Error, Result};

/// User-held-out split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    /// Fraction of users held out for testing, within [0.20, 0.25].
    pub test_user_fraction: f64,
    /// Fraction of each training user's windows kept for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_user_fraction: 0.2,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.20..=0.25).contains(&self.test_user_fraction) {
            return Err(Error::config(format!(
                "test_user_fraction must be within [0.20, 0.25], got {}",
                self.test_user_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config(format!(
                "validation_fraction must be within [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Partitions user ids into `(train_users, test_users)`, both sorted.
pub fn split_user_ids(users: &[String], spec: &SplitSpec) -> Result<(Vec<String>, Vec<String>)> {
    spec.validate()?;
    let mut users: Vec<String> = users.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if users.len() < 3 {
        return Err(Error::config(format!("need at least 3 distinct users, found {}", users.len())));
    }
    let n_test = ((users.len() as f64 * spec.test_user_fraction).round() as usize).clamp(1, users.len() - 2);
    users.shuffle(&mut rng::seeded(rng::derive_seed(spec.seed, "split-users")));
    let mut test: Vec<String> = users[..n_test].to_vec();
    let mut train: Vec<String> = users[n_test..].to_vec();
    test.sort();
    train.sort();
    Ok((train, test))
}

/// Holds out test users, then draws a per-user validation sample from the
/// remaining windows.
pub fn split_by_users(dataset: &Dataset, spec: &SplitSpec) -> Result<DataSplit> {
    let (train_users, test_users) = split_user_ids(&dataset.users(), spec)?;
    let test_set: BTreeSet<&str> = test_users.iter().map(String::as_str).collect();

    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut test_idx = Vec::new();
    for (i, w) in dataset.windows().iter().enumerate() {
        if test_set.contains(w.user_id.as_str()) {
            test_idx.push(i);
        } else {
            by_user.entry(w.user_id.as_str()).or_default().push(i);
        }
    }
    debug_assert_eq!(by_user.len(), train_users.len());

    let mut r = rng::seeded(rng::derive_seed(spec.seed, "split-validation"));
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for idx in by_user.values() {
        let mut idx = idx.clone();
        idx.shuffle(&mut r);
        let n_val = (idx.len() as f64 * spec.validation_fraction).round() as usize;
        val_idx.extend_from_slice(&idx[..n_val]);
        train_idx.extend_from_slice(&idx[n_val..]);
    }
    if val_idx.is_empty() && spec.validation_fraction > 0.0 && train_idx.len() > 1 {
        val_idx.push(train_idx.pop().expect("non-empty"));
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    Ok(DataSplit {
        train: dataset.select(&train_idx)?,
        validation: dataset.select(&val_idx)?,
        test: dataset.select(&test_idx)?,
    })
}
