//! Minimal neural-network engine: dense, 1-D convolution and max-pool layers
//! with ReLU, softmax cross-entropy, SGD and finite-difference checking.

mod gemm;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod optim;

pub use gradcheck::{compare_gradients, grad_check, grad_check_with, GradCheckOptions};
pub use layer::{
    backward, forward, predict, Activation, Conv1d, Dense, ForwardCache, Layer, LayerGrads,
    LayerKind, MaxPool1d,
};
pub use loss::{argmax_rows, softmax, softmax_cross_entropy};
pub use optim::{sgd_step, DEFAULT_LR};
