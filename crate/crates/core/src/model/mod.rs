//! The temporal convolutional network: a three-layer convolutional core
//! shared by an activity-recognition head, eight transformation-discrimination
//! heads, or a linear evaluation head.

mod io;
mod layers;
mod network;

pub use io::{load_weights, save_weights, weights_from_bytes, weights_to_bytes, InferenceDescriptor, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use layers::{Conv1d, Dense, InitScheme};
pub use network::{
    ClassifierHead, Example, GradientProbe, HarHead, LinearHead, ModelParameters, Prediction, TdHeads,
    TpnCore, CORE_LAYERS, DROPOUT_RATE, FEATURE_DIM, HAR_HIDDEN, TD_HIDDEN,
};
