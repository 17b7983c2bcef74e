//! Semi-supervised training for accelerometer-based human activity recognition.
//!
//! A teacher network trained on a small labeled set pseudo-labels a pool of
//! unlabeled windows. The most confident windows are augmented with eight
//! signal transformations, and a student network is pre-trained on the joint
//! activity-recognition and transformation-discrimination tasks before being
//! fine-tuned on the labeled data with its early convolutional layers frozen.
//!
//! Module map:
//!
//! - [`ndtensor`]: dense tensors, layer kernels with explicit backward passes,
//!   losses, Adam and a finite-difference gradient checker.
//! - [`signals`]: the eight signal transformations and multi-task dataset
//!   construction.
//! - [`datakit`]: CSV ingestion, normalization, windowing, user splits,
//!   label subsampling, intensity subsets and a synthetic data generator.
//! - [`model`]: the temporal convolutional network, its heads, freezing
//!   policy and weight files.
//! - [`pipeline`]: teacher training, confident-sample selection, student
//!   pre-training, fine-tuning and the five pipeline configurations.
//! - [`evalkit`]: F1, kappa, bootstrap intervals, confusion deltas, linear
//!   evaluation and embedding export.
//! - [`baselines`]: statistical features and the En-Co-Training ensemble.

pub mod baselines;
pub mod datakit;
pub mod error;
pub mod evalkit;
pub mod model;
pub mod ndtensor;
pub mod pipeline;
pub mod rng;
pub mod signals;

pub use error::{Error, Result};
