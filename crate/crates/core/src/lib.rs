//! Dense tensor math, CNN layers with hand-written backpropagation, and the
//! probabilistic instrumentation that reads each hidden layer as a Boltzmann
//! distribution.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root pin the common instantiations.

pub mod backprop;
pub mod bayesnet;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod problens;
pub mod rng;
pub mod scalar;
pub mod sgd;
pub mod spec;
pub mod tensor;

pub use backprop::{backward, loss_and_gradients, Gradients};
pub use error::{CoreError, Result};
pub use network::{forward_with_trace, init_params, Layer, LayerTrace, Network, TraceEntry};
pub use scalar::Scalar;
pub use sgd::sgd_step;
pub use spec::{LayerSpec, NetworkSpec, Preset};
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Network64 = Network<f64>;
pub type Network32 = Network<f32>;
pub type Gradients64 = Gradients<f64>;
pub type Gradients32 = Gradients<f32>;
