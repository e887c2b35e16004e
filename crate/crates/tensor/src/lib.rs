//! Reverse-mode autodiff on dense row-major tensors, plus the training
//! plumbing that sits next to it: a named parameter store, Adagrad,
//! splittable seeded RNG streams, a binary checkpoint container, and
//! finite-difference gradient checking helpers.
//!
//! The graph is an eager tape: ops compute their value immediately and
//! record what backward needs. Everything is generic over [`Scalar`] so
//! the same model code runs in f32 for training and f64 for gradient
//! checks.

pub mod adagrad;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use adagrad::Adagrad;
pub use error::{Result, TensorError};
pub use graph::{Graph, NodeId};
pub use params::{Param, ParamId, ParamStore};
pub use rng::SeedSplit;
pub use scalar::Scalar;
pub use tensor::Tensor;
