use serde::{Deserialize, Serialize};

use super::{Dataset, Window, CHANNELS};
use crate::{rng, Error, Result};

/// Exactly `n_per_class` windows per class, uniformly without replacement.
/// Output keeps the input order.
pub fn subsample_labeled(train: &Dataset, n_per_class: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::config("n_per_class must be at least 1"));
    }
    let mut r = rng::seeded(rng::derive_seed(seed, "subsample-labeled"));
    let mut chosen = Vec::with_capacity(n_per_class * train.num_classes());
    for (class, name) in train.label_vocabulary().iter().enumerate() {
        let members: Vec<usize> = train
            .windows()
            .iter()
            .enumerate()
            .filter(|(_, w)| w.label == Some(class))
            .map(|(i, _)| i)
            .collect();
        if members.len() < n_per_class {
            return Err(Error::data(format!(
                "class `{name}` has {} windows, {n_per_class} requested",
                members.len()
            )));
        }
        let picks = rand::seq::index::sample(&mut r, members.len(), n_per_class);
        chosen.extend(picks.into_iter().map(|k| members[k]));
    }
    chosen.sort_unstable();
    train.select(&chosen)
}

/// Mean Euclidean norm of the per-timestep acceleration vector.
pub fn intensity_proxy(window: &Window) -> f64 {
    let n = window.timesteps();
    window
        .values()
        .chunks_exact(CHANNELS)
        .map(|s| (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt())
        .sum::<f64>()
        / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityMode {
    Inactive,
    Balanced,
    Active,
}

impl IntensityMode {
    pub const ALL: [IntensityMode; 3] = [Self::Inactive, Self::Balanced, Self::Active];

    pub fn name(self) -> &'static str {
        match self {
            Self::Inactive => "inactive",
            Self::Balanced => "balanced",
            Self::Active => "active",
        }
    }
}

/// Intensity-stratified subset of `target_size` windows.
///
/// Windows are ranked by [`intensity_proxy`] (ties by index). `Inactive` takes
/// the lowest-ranked windows, `Active` the highest, and `Balanced` an equal
/// share of evenly spaced ranks from each tercile, where rank `r` of `n` is in
/// tercile `floor(3r / n)`.
pub fn subset_by_intensity(unlabeled: &Dataset, mode: IntensityMode, target_size: usize) -> Result<Dataset> {
    let n = unlabeled.len();
    if n == 0 {
        return Err(Error::data("cannot subset an empty dataset"));
    }
    if target_size > n {
        return Err(Error::data(format!("target size {target_size} exceeds {n} available windows")));
    }
    let proxy: Vec<f64> = unlabeled.windows().iter().map(intensity_proxy).collect();
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| proxy[a].total_cmp(&proxy[b]).then(a.cmp(&b)));

    let mut chosen: Vec<usize> = match mode {
        IntensityMode::Inactive => ranked[..target_size].to_vec(),
        IntensityMode::Active => {
            let mut desc: Vec<usize> = (0..n).collect();
            desc.sort_by(|&a, &b| proxy[b].total_cmp(&proxy[a]).then(a.cmp(&b)));
            desc[..target_size].to_vec()
        }
        IntensityMode::Balanced => {
            // rank r belongs to tercile floor(3r / n)
            let bounds: Vec<usize> = (0..=3).map(|t| (t * n).div_ceil(3)).collect();
            let mut out = Vec::with_capacity(target_size);
            for t in 0..3 {
                let tercile = &ranked[bounds[t]..bounds[t + 1]];
                let want = target_size / 3 + usize::from(t < target_size % 3);
                if want > tercile.len() {
                    return Err(Error::data(format!(
                        "tercile {t} holds {} windows, {want} requested",
                        tercile.len()
                    )));
                }
                out.extend((0..want).map(|k| tercile[(2 * k + 1) * tercile.len() / (2 * want)]));
            }
            out
        }
    };
    chosen.sort_unstable();
    unlabeled.select(&chosen)
}
