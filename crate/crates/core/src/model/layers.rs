use serde::{Deserialize, Serialize};

use crate::ndtensor::{Parameter, Tensor};
use crate::rng;

/// Weight initialization. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitScheme {
    /// i.i.d. Gaussian(0, std²).
    Gaussian { std: f64 },
    /// Uniform(±√(6 / (fan_in + fan_out))).
    GlorotUniform,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Gaussian { std: 0.01 }
    }
}

impl InitScheme {
    fn sample(self, shape: &[usize], fan_in: usize, fan_out: usize, seed: u64) -> Tensor {
        use rand::Rng;
        let mut r = rng::seeded(seed);
        match self {
            InitScheme::Gaussian { std } => Tensor::randn(shape, std, &mut r),
            InitScheme::GlorotUniform => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Tensor::from_fn(shape, |_| r.random_range(-limit..limit))
            }
        }
    }
}

/// Valid stride-1 temporal convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub kernels: Parameter,
    pub bias: Parameter,
}

impl Conv1d {
    pub fn new(name: &str, filters: usize, width: usize, channels: usize, init: InitScheme, seed: u64) -> Self {
        let kname = format!("{name}.kernels");
        let kernels = init.sample(
            &[filters, width, channels],
            width * channels,
            width * filters,
            rng::derive_seed(seed, &kname),
        );
        Self {
            kernels: Parameter::weight(kname, kernels),
            bias: Parameter::bias(format!("{name}.bias"), Tensor::zeros(&[filters])),
        }
    }

    pub fn filters(&self) -> usize {
        self.kernels.value.dim(0)
    }

    pub fn width(&self) -> usize {
        self.kernels.value.dim(1)
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.kernels.frozen = frozen;
        self.bias.frozen = frozen;
    }

    pub fn is_frozen(&self) -> bool {
        self.kernels.frozen && self.bias.frozen
    }
}

/// Fully connected layer, weights stored `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Parameter,
    pub bias: Parameter,
}

impl Dense {
    pub fn new(name: &str, inputs: usize, outputs: usize, init: InitScheme, seed: u64) -> Self {
        let wname = format!("{name}.weights");
        let weights = init.sample(&[outputs, inputs], inputs, outputs, rng::derive_seed(seed, &wname));
        Self {
            weights: Parameter::weight(wname, weights),
            bias: Parameter::bias(format!("{name}.bias"), Tensor::zeros(&[outputs])),
        }
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.weights.frozen = frozen;
        self.bias.frozen = frozen;
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weights, &mut self.bias]
    }
}
