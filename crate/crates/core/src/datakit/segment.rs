use std::collections::HashMap;

use super::{RawRecording, Window, CHANNELS};
use crate::{Error, Result};

/// Fraction of each window shared with the next.
pub const WINDOW_OVERLAP: f64 = 0.5;

/// Number of full windows in a recording of `len` samples.
pub fn window_count(len: usize, window_len: usize, overlap: f64) -> usize {
    if len < window_len {
        return 0;
    }
    (len - window_len) / step(window_len, overlap) + 1
}

fn step(window_len: usize, overlap: f64) -> usize {
    ((window_len as f64 * (1.0 - overlap)).round() as usize).max(1)
}

/// Cuts a recording into overlapping windows; the trailing partial window is
/// dropped.
///
/// For labeled recordings the window label is the strict-majority per-sample
/// label; windows without one are dropped. Labels are mapped through
/// `vocabulary`.
pub fn segment(
    recording: &RawRecording,
    vocabulary: &[String],
    window_len: usize,
    overlap: f64,
) -> Result<Vec<Window>> {
    if window_len == 0 {
        return Err(Error::config("window length must be at least 1"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::config(format!("overlap must be in [0, 1), got {overlap}")));
    }
    let index: HashMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let step = step(window_len, overlap);
    let n = window_count(recording.len(), window_len, overlap);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let start = k * step;
        let range = start..start + window_len;
        let label = match &recording.labels {
            None => None,
            Some(labels) => match majority(&labels[range.clone()], window_len) {
                None => continue,
                Some(name) => Some(*index.get(name).ok_or_else(|| {
                    Error::data(format!("activity `{name}` is not in the label vocabulary"))
                })?),
            },
        };
        let mut values = Vec::with_capacity(window_len * CHANNELS);
        for s in &recording.samples[range] {
            values.extend_from_slice(s);
        }
        out.push(Window::new(values, recording.user_id.clone(), label)?);
    }
    Ok(out)
}

fn majority(labels: &[Option<String>], window_len: usize) -> Option<&str> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in labels.iter().flatten() {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    counts
        .into_iter()
        .find(|&(_, c)| 2 * c > window_len)
        .map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recording(len: usize, labels: Option<Vec<Option<String>>>) -> RawRecording {
        RawRecording {
            user_id: "u".into(),
            timestamps_ms: (0..len).map(|i| i as f64 * 20.0).collect(),
            samples: (0..len).map(|i| [i as f64, 0.0, 1.0]).collect(),
            labels,
            sampling_rate_hz: 50.0,
        }
    }

    #[test]
    fn counts_and_starts() {
        let w = segment(&recording(1000, None), &[], 400, 0.5).unwrap();
        assert_eq!(w.len(), 4);
        let starts: Vec<f64> = w.iter().map(|w| w.values()[0]).collect();
        assert_eq!(starts, vec![0.0, 200.0, 400.0, 600.0]);
        assert_eq!(segment(&recording(400, None), &[], 400, 0.5).unwrap().len(), 1);
        assert_eq!(segment(&recording(399, None), &[], 400, 0.5).unwrap().len(), 0);
    }

    #[test]
    fn count_formula_holds() {
        for len in 400..1500 {
            assert_eq!(window_count(len, 400, 0.5), (len - 400) / 200 + 1);
            assert_eq!(segment(&recording(len, None), &[], 400, 0.5).unwrap().len(), window_count(len, 400, 0.5));
        }
    }

    #[test]
    fn majority_labeling() {
        let vocab = vec!["sit".to_string(), "walk".to_string()];
        // 600 samples: first 300 sit, last 300 walk.
        let labels = (0..600)
            .map(|i| Some(if i < 300 { "sit" } else { "walk" }.to_string()))
            .collect();
        let w = segment(&recording(600, Some(labels)), &vocab, 400, 0.5).unwrap();
        // window 0: 300 sit / 100 walk → sit; window 1: 100 sit / 300 walk → walk
        assert_eq!(w.iter().map(|w| w.label).collect::<Vec<_>>(), vec![Some(0), Some(1)]);

        // exact 200/200 split has no strict majority → dropped
        let labels = (0..400)
            .map(|i| Some(if i < 200 { "sit" } else { "walk" }.to_string()))
            .collect();
        assert!(segment(&recording(400, Some(labels)), &vocab, 400, 0.5).unwrap().is_empty());

        let labels = (0..400).map(|_| Some("run".to_string())).collect();
        assert!(segment(&recording(400, Some(labels)), &vocab, 400, 0.5).is_err());
    }
}
