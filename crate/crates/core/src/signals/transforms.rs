use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datakit::{Window, CHANNELS};
use crate::{Error, Result};

/// The eight transformations. The ordinal is the label index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Noise,
    Scale,
    Rotate3D,
    Invert,
    TimeReverse,
    Scramble,
    TimeWarp,
    ChannelShuffle,
}

impl TransformKind {
    pub const COUNT: usize = 8;
    pub const ALL: [TransformKind; 8] = [
        Self::Noise,
        Self::Scale,
        Self::Rotate3D,
        Self::Invert,
        Self::TimeReverse,
        Self::Scramble,
        Self::TimeWarp,
        Self::ChannelShuffle,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Noise => "noise",
            Self::Scale => "scale",
            Self::Rotate3D => "rotate3d",
            Self::Invert => "invert",
            Self::TimeReverse => "time_reverse",
            Self::Scramble => "scramble",
            Self::TimeWarp => "time_warp",
            Self::ChannelShuffle => "channel_shuffle",
        }
    }
}

/// Transformation magnitudes, in z-normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformParams {
    pub noise_sigma: f64,
    pub scale_low: f64,
    pub scale_high: f64,
    pub scramble_segments: usize,
    pub warp_knots: usize,
    pub warp_sigma: f64,
}

impl Default for TransformParams {
    fn default() -> Self {
        Self {
            noise_sigma: 0.05,
            scale_low: 0.9,
            scale_high: 1.1,
            scramble_segments: 4,
            warp_knots: 4,
            warp_sigma: 0.2,
        }
    }
}

impl TransformParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma > 0.0) {
            return Err(Error::config("noise_sigma must be positive"));
        }
        if !(self.scale_low < self.scale_high) {
            return Err(Error::config("scale_low must be below scale_high"));
        }
        if self.scramble_segments < 2 {
            return Err(Error::config("scramble_segments must be at least 2"));
        }
        if self.warp_knots < 2 {
            return Err(Error::config("warp_knots must be at least 2"));
        }
        if !(self.warp_sigma >= 0.0) {
            return Err(Error::config("warp_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Uniformly distributed rotation matrix over SO(3) (Shoemake's quaternion
/// construction).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (x, y) = (a * (2.0 * PI * u2).sin(), a * (2.0 * PI * u2).cos());
    let (z, w) = (b * (2.0 * PI * u3).sin(), b * (2.0 * PI * u3).cos());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Random permutation of `0..n` other than the identity (`n ≥ 2`).
fn non_identity_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().any(|(i, &p)| i != p) {
            return perm;
        }
    }
}

/// Applies one transformation, returning a window of the same shape.
pub fn apply_transform<R: Rng + ?Sized>(
    window: &Window,
    kind: TransformKind,
    params: &TransformParams,
    rng: &mut R,
) -> Result<Window> {
    params.validate()?;
    let x = window.values();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("cannot transform a window with non-finite values"));
    }
    let t_len = window.timesteps();
    let out: Vec<f64> = match kind {
        TransformKind::Noise => {
            let normal = Normal::new(0.0, params.noise_sigma).expect("validated sigma");
            x.iter().map(|v| v + normal.sample(rng)).collect()
        }
        TransformKind::Scale => {
            let s = rng.random_range(params.scale_low..params.scale_high);
            x.iter().map(|v| v * s).collect()
        }
        TransformKind::Rotate3D => {
            let r = random_rotation(rng);
            x.chunks_exact(CHANNELS)
                .flat_map(|v| {
                    (0..3).map(move |i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2])
                })
                .collect()
        }
        TransformKind::Invert => x.iter().map(|v| -v).collect(),
        TransformKind::TimeReverse => x.chunks_exact(CHANNELS).rev().flatten().copied().collect(),
        TransformKind::Scramble => {
            let segments = params.scramble_segments;
            if t_len < segments {
                return Err(Error::config(format!(
                    "cannot scramble {t_len} timesteps into {segments} segments"
                )));
            }
            let bounds: Vec<usize> = (0..=segments).map(|j| j * t_len / segments).collect();
            non_identity_permutation(segments, rng)
                .into_iter()
                .flat_map(|s| x[bounds[s] * CHANNELS..bounds[s + 1] * CHANNELS].iter().copied())
                .collect()
        }
        TransformKind::TimeWarp => time_warp(x, t_len, params, rng),
        TransformKind::ChannelShuffle => {
            let perm = non_identity_permutation(CHANNELS, rng);
            x.chunks_exact(CHANNELS)
                .flat_map(|v| perm.iter().map(move |&c| v[c]))
                .collect()
        }
    };
    window.with_values(out)
}

/// Resamples the window along a smooth monotone time curve. The local speed
/// is interpolated between `warp_knots + 2` Gaussian(1, σ²) multipliers and
/// integrated; the curve is rescaled to span the original duration.
fn time_warp<R: Rng + ?Sized>(x: &[f64], t_len: usize, params: &TransformParams, rng: &mut R) -> Vec<f64> {
    if t_len < 2 {
        return x.to_vec();
    }
    let normal = Normal::new(1.0, params.warp_sigma).expect("validated sigma");
    let n_points = params.warp_knots + 2;
    let knots: Vec<f64> = (0..n_points).map(|_| normal.sample(rng).max(0.1)).collect();
    let last = (t_len - 1) as f64;
    let speed = |i: usize| {
        let pos = i as f64 / last * (n_points - 1) as f64;
        let k = (pos.floor() as usize).min(n_points - 2);
        let frac = pos - k as f64;
        knots[k] * (1.0 - frac) + knots[k + 1] * frac
    };
    let mut warped = vec![0.0; t_len];
    for i in 1..t_len {
        warped[i] = warped[i - 1] + 0.5 * (speed(i - 1) + speed(i));
    }
    let total = warped[t_len - 1];
    warped.iter_mut().for_each(|w| *w = *w / total * last);

    let mut out = Vec::with_capacity(x.len());
    for &pos in &warped {
        let lo = (pos.floor() as usize).min(t_len - 2);
        let frac = (pos - lo as f64).clamp(0.0, 1.0);
        for c in 0..CHANNELS {
            let a = x[lo * CHANNELS + c];
            let b = x[(lo + 1) * CHANNELS + c];
            out.push(a + (b - a) * frac);
        }
    }
    out
}
