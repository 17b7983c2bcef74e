use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{segment, Dataset, RawRecording, Role, WINDOW_LEN, WINDOW_OVERLAP};
use crate::{rng, Error, Result};

/// Synthetic accelerometer generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    /// Users contributing labeled recordings.
    pub users: usize,
    pub windows_per_user_per_class: usize,
    /// Additional users whose recordings form the unlabeled pool.
    pub unlabeled_users: usize,
    pub unlabeled_windows_per_user: usize,
    pub sampling_rate_hz: f64,
    /// Standard deviation of additive sensor noise (in g).
    pub noise_std: f64,
    /// Spread of per-user gain, tempo and device orientation.
    pub user_variability: f64,
    pub window_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 6,
            users: 13,
            windows_per_user_per_class: 20,
            unlabeled_users: 10,
            unlabeled_windows_per_user: 500,
            sampling_rate_hz: 50.0,
            noise_std: 0.25,
            user_variability: 0.35,
            window_len: WINDOW_LEN,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("synthetic data needs at least 2 classes"));
        }
        if self.users < 3 {
            return Err(Error::config("synthetic data needs at least 3 labeled users"));
        }
        if self.window_len < 2 || !self.window_len.is_multiple_of(2) {
            return Err(Error::config("synthetic window length must be even and at least 2"));
        }
        if self.unlabeled_users > 0 && self.unlabeled_windows_per_user < self.classes {
            return Err(Error::config("unlabeled_windows_per_user must be at least the class count"));
        }
        if !(self.sampling_rate_hz > 0.0) || self.noise_std < 0.0 || self.user_variability < 0.0 {
            return Err(Error::config("sampling rate must be positive; noise and variability non-negative"));
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Vec<String> {
        (0..self.classes).map(|c| format!("activity_{c:02}")).collect()
    }
}

/// Class prototype: resting posture plus a two-harmonic periodic motion whose
/// amplitude rises with the class index.
struct ClassProfile {
    gravity: [f64; 3],
    amplitude: f64,
    frequency_hz: f64,
    harmonic_weights: [[f64; 2]; 3],
}

fn class_profiles(cfg: &SynthConfig) -> Vec<ClassProfile> {
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, "synth-classes"));
    let k = cfg.classes;
    (0..k)
        .map(|c| {
            let frac = c as f64 / (k - 1) as f64;
            let tilt: f64 = r.random_range(-0.6..0.6);
            let yaw: f64 = r.random_range(0.0..2.0 * PI);
            let gravity = [tilt.sin() * yaw.cos(), tilt.sin() * yaw.sin(), tilt.cos()];
            let mut harmonic_weights = [[0.0; 2]; 3];
            for row in &mut harmonic_weights {
                *row = [r.random_range(0.3..1.0), r.random_range(0.0..0.6)];
            }
            ClassProfile {
                gravity,
                amplitude: 0.08 + 0.9 * frac,
                frequency_hz: 0.7 + 2.3 * frac + r.random_range(-0.1..0.1),
                harmonic_weights,
            }
        })
        .collect()
}

/// Per-user nuisance: gain, tempo and a rotation of the device frame.
struct UserProfile {
    gain: f64,
    tempo: f64,
    rotation: [[f64; 3]; 3],
}

fn user_profile(cfg: &SynthConfig, user_key: &str) -> UserProfile {
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, user_key));
    let v = cfg.user_variability;
    let gain = 1.0 + v * r.random_range(-1.0..1.0);
    let tempo = 1.0 + v / 3.0 * r.random_range(-1.0..1.0);
    // Rotation by angle ≤ v·π/2 about a random axis (Rodrigues).
    let angle = v * PI / 2.0 * r.random::<f64>();
    let z: f64 = r.random_range(-1.0..1.0);
    let phi: f64 = r.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    let axis = [s * phi.cos(), s * phi.sin(), z];
    UserProfile {
        gain: gain.max(0.1),
        tempo,
        rotation: axis_angle(axis, angle),
    }
}

fn axis_angle(a: [f64; 3], theta: f64) -> [[f64; 3]; 3] {
    let (s, c) = theta.sin_cos();
    let t = 1.0 - c;
    [
        [t * a[0] * a[0] + c, t * a[0] * a[1] - s * a[2], t * a[0] * a[2] + s * a[1]],
        [t * a[0] * a[1] + s * a[2], t * a[1] * a[1] + c, t * a[1] * a[2] - s * a[0]],
        [t * a[0] * a[2] - s * a[1], t * a[1] * a[2] + s * a[0], t * a[2] * a[2] + c],
    ]
}

/// Generates one user's recording as consecutive class bouts. A bout of `n`
/// windows lasts `(n + 1)` half-windows, so every labeled window lies inside a
/// single bout and straddling windows have no strict majority.
fn user_recording(
    cfg: &SynthConfig,
    classes: &[ClassProfile],
    user_id: &str,
    bouts: &[(usize, usize)],
    labeled: bool,
) -> RawRecording {
    let user = user_profile(cfg, user_id);
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, &format!("{user_id}-signal")));
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("valid noise std");
    let half = cfg.window_len / 2;
    let dt = 1.0 / cfg.sampling_rate_hz;

    let total: usize = bouts.iter().map(|&(_, n)| (n + 1) * half).sum();
    let mut samples = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let names = cfg.vocabulary();
    for &(class, n_windows) in bouts {
        let p = &classes[class];
        let phases: [[f64; 2]; 3] = std::array::from_fn(|_| [r.random_range(0.0..2.0 * PI), r.random_range(0.0..2.0 * PI)]);
        let freq = p.frequency_hz * user.tempo;
        for i in 0..(n_windows + 1) * half {
            let t = i as f64 * dt;
            let mut local = [0.0; 3];
            for ch in 0..3 {
                let [w1, w2] = p.harmonic_weights[ch];
                let motion = w1 * (2.0 * PI * freq * t + phases[ch][0]).sin()
                    + w2 * (4.0 * PI * freq * t + phases[ch][1]).sin();
                local[ch] = p.gravity[ch] + user.gain * p.amplitude * motion;
            }
            let rot = &user.rotation;
            let sample: [f64; 3] = std::array::from_fn(|row| {
                rot[row][0] * local[0] + rot[row][1] * local[1] + rot[row][2] * local[2] + noise.sample(&mut r)
            });
            samples.push(sample);
            labels.push(Some(names[class].clone()));
        }
    }
    let timestamps_ms = (0..samples.len()).map(|i| i as f64 * 1000.0 * dt).collect();
    RawRecording {
        user_id: user_id.to_string(),
        timestamps_ms,
        samples,
        labels: labeled.then_some(labels),
        sampling_rate_hz: cfg.sampling_rate_hz,
    }
}

/// Labeled and unlabeled synthetic recordings, in device units (g).
pub fn synthesize_recordings(cfg: &SynthConfig) -> Result<(Vec<RawRecording>, Vec<RawRecording>)> {
    cfg.validate()?;
    let classes = class_profiles(cfg);
    let mut order_rng = rng::seeded(rng::derive_seed(cfg.seed, "synth-bout-order"));

    let labeled = (0..cfg.users)
        .map(|u| {
            let mut bouts: Vec<(usize, usize)> = (0..cfg.classes).map(|c| (c, cfg.windows_per_user_per_class)).collect();
            bouts.shuffle(&mut order_rng);
            user_recording(cfg, &classes, &format!("user{u:02}"), &bouts, true)
        })
        .collect();

    // m windows from Σ(n_c + 1) − 1 half-window slots.
    let unlabeled = (0..cfg.unlabeled_users)
        .map(|u| {
            let k = cfg.classes;
            let budget = cfg.unlabeled_windows_per_user + 1 - k;
            let mut bouts: Vec<(usize, usize)> = (0..k).map(|c| (c, budget / k + usize::from(c < budget % k))).collect();
            bouts.shuffle(&mut order_rng);
            user_recording(cfg, &classes, &format!("extra{u:02}"), &bouts, false)
        })
        .collect();
    Ok((labeled, unlabeled))
}

/// Segmented synthetic datasets: `(labeled D, unlabeled U)`, not normalized.
pub fn synthesize(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    let (lab, unl) = synthesize_recordings(cfg)?;
    let vocab = cfg.vocabulary();
    let mut labeled = Vec::new();
    for r in &lab {
        labeled.extend(segment(r, &vocab, cfg.window_len, WINDOW_OVERLAP)?);
    }
    let mut unlabeled = Vec::new();
    for r in &unl {
        unlabeled.extend(segment(r, &vocab, cfg.window_len, WINDOW_OVERLAP)?);
    }
    Ok((
        Dataset::new(labeled, vocab.clone(), Role::Labeled)?,
        Dataset::new(unlabeled, vocab, Role::Unlabeled)?,
    ))
}
