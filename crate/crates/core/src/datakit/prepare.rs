use super::{split_by_users, ChannelStats, Dataset, SplitSpec};
use crate::{Error, Result};

/// User-held-out partitions, all z-normalized with training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub unlabeled: Option<Dataset>,
    pub stats: ChannelStats,
}

/// Splits raw-unit windows by user and normalizes every partition (and the
/// unlabeled pool) with statistics of the training partition only.
pub fn prepare_datasets(labeled: &Dataset, unlabeled: Option<&Dataset>, spec: &SplitSpec) -> Result<PreparedData> {
    spec.validate()?;
    let split = split_by_users(labeled, spec)?;
    if split.validation.is_empty() {
        return Err(Error::data("validation partition is empty; add windows or raise validation_fraction"));
    }
    if let Some(u) = unlabeled {
        let test_users = split.test.users();
        if let Some(shared) = u.users().into_iter().find(|id| test_users.contains(id)) {
            return Err(Error::data(format!("test user {shared} also appears in the unlabeled pool")));
        }
    }
    let stats = ChannelStats::from_dataset(&split.train)?;
    let norm = |mut d: Dataset| {
        stats.apply_dataset(&mut d);
        d
    };
    Ok(PreparedData {
        train: norm(split.train),
        validation: norm(split.validation),
        test: norm(split.test),
        unlabeled: unlabeled.map(|u| norm(u.clone())),
        stats,
    })
}
