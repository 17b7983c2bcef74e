use super::{apply_transform, TransformKind, TransformParams};
use crate::datakit::{Dataset, Window};
use crate::{rng, Error, Result};

/// One record of the multi-task dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformRecord {
    pub window: Window,
    /// One flag per [`TransformKind`] ordinal; at most one is set.
    pub transform_labels: [u8; TransformKind::COUNT],
    /// Teacher probability vector, when the record carries an activity target.
    pub har_soft_label: Option<Vec<f64>>,
}

impl TransformRecord {
    /// The applied transformation, or `None` for an original window.
    /// Errors when more than one flag is set.
    pub fn kind(&self) -> Result<Option<TransformKind>> {
        let set: Vec<usize> = (0..TransformKind::COUNT)
            .filter(|&i| self.transform_labels[i] != 0)
            .collect();
        match set.as_slice() {
            [] => Ok(None),
            [i] => Ok(TransformKind::from_ordinal(*i)),
            _ => Err(Error::data(format!("record carries {} transformation flags", set.len()))),
        }
    }

    pub fn transform_targets(&self) -> [f64; TransformKind::COUNT] {
        self.transform_labels.map(f64::from)
    }
}

fn augment(window: &Window, index: usize, soft: Option<Vec<f64>>, params: &TransformParams, seed: u64) -> Result<Vec<TransformRecord>> {
    let mut r = rng::stream(seed, index as u64);
    let mut out = Vec::with_capacity(1 + TransformKind::COUNT);
    out.push(TransformRecord {
        window: window.clone(),
        transform_labels: [0; TransformKind::COUNT],
        har_soft_label: soft.clone(),
    });
    for kind in TransformKind::ALL {
        let mut labels = [0; TransformKind::COUNT];
        labels[kind.ordinal()] = 1;
        out.push(TransformRecord {
            window: apply_transform(window, kind, params, &mut r)?,
            transform_labels: labels,
            har_soft_label: soft.clone(),
        });
    }
    Ok(out)
}

/// Builds D′ from the selected set S: nine records per window, activity soft
/// labels copied from the source. Window `i` draws from stream `(seed, i)`.
pub fn build_multitask_dataset(
    selected: &Dataset,
    params: &TransformParams,
    seed: u64,
) -> Result<Vec<TransformRecord>> {
    params.validate()?;
    let mut out = Vec::with_capacity(selected.len() * (1 + TransformKind::COUNT));
    for (i, w) in selected.windows().iter().enumerate() {
        let soft = w
            .soft_label
            .clone()
            .ok_or_else(|| Error::data(format!("selected window {i} has no soft activity label")))?;
        let total: f64 = soft.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::data(format!("soft label of window {i} sums to {total}")));
        }
        out.extend(augment(w, i, Some(soft), params, seed)?);
    }
    Ok(out)
}

/// Transformation-only dataset (no activity targets), used to pre-train on
/// the label-stripped pool.
pub fn build_transformation_dataset(
    windows: &Dataset,
    params: &TransformParams,
    seed: u64,
) -> Result<Vec<TransformRecord>> {
    params.validate()?;
    let mut out = Vec::with_capacity(windows.len() * (1 + TransformKind::COUNT));
    for (i, w) in windows.windows().iter().enumerate() {
        out.extend(augment(w, i, None, params, seed)?);
    }
    Ok(out)
}
