//! Dense numerical core: layer forward/backward passes, loss, and updates.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod norm;
pub mod optim;

pub use activation::{binary_activation, binary_activation_backward, relu, relu_backward};
pub use conv::{conv2d_backward, conv2d_forward, ConvGeometry, ConvParams};
pub use dense::{fc_backward, fc_forward};
pub use gradcheck::{grad_check, GradCheckReport, Objective, ParamBlock};
pub use loss::{softmax, softmax_xent};
pub use norm::BatchNorm;
pub use optim::{sgd_step, Clip, Sgd};
