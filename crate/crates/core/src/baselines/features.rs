use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::datakit::{Dataset, Window, CHANNELS};
use crate::evalkit::percentile;
use crate::{Error, Result};

pub const FEATURE_COUNT: usize = 27;
const STATS: [&str; 7] = ["mean", "iqr", "mad", "rms", "std", "var", "energy"];
const AXES: [&str; 3] = ["x", "y", "z"];

pub type FeatureVector = [f64; FEATURE_COUNT];

/// Column names: seven statistics for each axis (statistic-major), the
/// xy/xz/yz correlations, then three reserved zero slots.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = STATS
        .iter()
        .flat_map(|s| AXES.iter().map(move |a| format!("{s}_{a}")))
        .collect();
    names.extend(["corr_xy", "corr_xz", "corr_yz"].map(String::from));
    names.extend((0..3).map(|i| format!("reserved_{i}")));
    names
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Reusable FFT plan for windows of one length.
pub struct FeatureExtractor {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    len: usize,
}

impl FeatureExtractor {
    pub fn new(timesteps: usize) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(timesteps),
            len: timesteps,
        }
    }

    /// Sum of squared DFT magnitudes excluding the zero-frequency bin,
    /// divided by the window length.
    fn spectral_energy(&self, axis: &[f64]) -> f64 {
        let mut buf: Vec<Complex<f64>> = axis.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        buf[1..].iter().map(|c| c.norm_sqr()).sum::<f64>() / self.len as f64
    }

    pub fn extract(&self, window: &Window) -> Result<FeatureVector> {
        let t = window.timesteps();
        if t != self.len {
            return Err(Error::dim("extract_features", "time", self.len, t));
        }
        if t == 0 {
            return Err(Error::data("cannot extract features from an empty window"));
        }
        if window.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::data("window contains non-finite values"));
        }
        let axes: Vec<Vec<f64>> = (0..CHANNELS)
            .map(|c| window.values().iter().skip(c).step_by(CHANNELS).copied().collect())
            .collect();
        let mut f = [0.0; FEATURE_COUNT];
        let n = t as f64;
        for (a, x) in axes.iter().enumerate() {
            let mean = x.iter().sum::<f64>() / n;
            let mut sorted = x.clone();
            sorted.sort_by(f64::total_cmp);
            let iqr = percentile(&sorted, 75.0) - percentile(&sorted, 25.0);
            let mad = x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let stats = [mean, iqr, mad, rms, var.sqrt(), var, self.spectral_energy(x)];
            for (s, v) in stats.into_iter().enumerate() {
                f[s * CHANNELS + a] = v;
            }
        }
        f[21] = pearson(&axes[0], &axes[1]);
        f[22] = pearson(&axes[0], &axes[2]);
        f[23] = pearson(&axes[1], &axes[2]);
        Ok(f)
    }
}

pub fn extract_features(window: &Window) -> Result<FeatureVector> {
    FeatureExtractor::new(window.timesteps()).extract(window)
}

pub fn extract_dataset_features(dataset: &Dataset) -> Result<Vec<FeatureVector>> {
    let Some(first) = dataset.windows().first() else {
        return Ok(Vec::new());
    };
    let fx = FeatureExtractor::new(first.timesteps());
    dataset.windows().iter().map(|w| fx.extract(w)).collect()
}

/// Feature matrix as CSV: `user_id,label,<feature names>`.
pub fn export_features_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let features = extract_dataset_features(dataset)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["user_id".to_string(), "label".to_string()];
    header.extend(feature_names());
    w.write_record(&header)?;
    for (win, f) in dataset.windows().iter().zip(&features) {
        let mut row = vec![
            win.user_id.clone(),
            win.label.map(|l| dataset.label_vocabulary()[l].clone()).unwrap_or_default(),
        ];
        row.extend(f.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
