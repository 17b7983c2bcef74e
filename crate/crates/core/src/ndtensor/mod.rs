//! Minimal dense-tensor kernel for the temporal convolutional network.
//!
//! Every layer exposes an explicit forward and backward function. There is no
//! autograd graph: the model module chains these calls by hand.

mod gradcheck;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use gradcheck::{finite_difference_check, relative_error, Differentiable, GradCheckReport};
pub use layers::{
    conv1d_backward, conv1d_backward_params, conv1d_forward, dense_backward, dense_forward,
    dropout, global_max_pool, global_max_pool_backward, relu, relu_backward, sigmoid,
    sigmoid_backward, softmax, DropoutMask, LayerGradients,
};
pub use loss::{
    binary_cross_entropy, categorical_cross_entropy, l2_penalty, l2_value, RegularizationConfig, PROB_FLOOR,
};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tensor::{GradientMap, Parameter, Tensor};
