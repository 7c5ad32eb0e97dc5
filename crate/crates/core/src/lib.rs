//! SplitFed learning simulator with label-flipping data poisoning attacks.
//!
//! Split models are trained across simulated clients, a main server and a
//! fed server; malicious clients rewrite the labels of their own shards.

pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod poisoning;
pub mod protocol;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
