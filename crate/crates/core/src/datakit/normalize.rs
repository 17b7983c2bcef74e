use serde::{Deserialize, Serialize};

use super::{Dataset, RawRecording, CHANNELS};
use crate::{Error, Result};

/// Lower bound on per-channel standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean and (population) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl ChannelStats {
    /// Fits statistics over `(x, y, z)` samples. Two-pass for accuracy.
    pub fn fit<'a>(samples: impl Iterator<Item = &'a [f64]> + Clone) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = [0.0; CHANNELS];
        for s in samples.clone() {
            for c in 0..CHANNELS {
                sum[c] += s[c];
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::config("cannot compute normalization statistics from an empty training partition"));
        }
        let mean = sum.map(|s| s / n as f64);
        let mut sq = [0.0; CHANNELS];
        for s in samples {
            for c in 0..CHANNELS {
                let d = s[c] - mean[c];
                sq[c] += d * d;
            }
        }
        let std = sq.map(|s| (s / n as f64).sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn from_dataset(training: &Dataset) -> Result<Self> {
        Self::fit(training.windows().iter().flat_map(|w| w.values().chunks_exact(CHANNELS)))
    }

    pub fn from_recordings(training: &[RawRecording]) -> Result<Self> {
        Self::fit(training.iter().flat_map(|r| r.samples.iter().map(|s| s.as_slice())))
    }

    pub fn apply(&self, values: &mut [f64]) {
        for s in values.chunks_exact_mut(CHANNELS) {
            for c in 0..CHANNELS {
                s[c] = (s[c] - self.mean[c]) / self.std[c];
            }
        }
    }

    pub fn apply_dataset(&self, dataset: &mut Dataset) {
        for w in dataset.windows_mut() {
            self.apply(w.values_mut());
        }
    }

    pub fn apply_recording(&self, recording: &mut RawRecording) {
        for s in &mut recording.samples {
            self.apply(s);
        }
    }
}

/// Normalizes `dataset` with statistics fitted on `training` only.
pub fn znormalize(dataset: &Dataset, training: &Dataset) -> Result<(Dataset, ChannelStats)> {
    let stats = ChannelStats::from_dataset(training)?;
    let mut out = dataset.clone();
    stats.apply_dataset(&mut out);
    Ok((out, stats))
}
