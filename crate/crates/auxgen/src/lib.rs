//! Dialogue generation with auxiliary context-understanding training:
//! a windowed multi-turn corpus pipeline, a masked-transformer
//! generator, three token-level corruption/recovery tasks, an
//! utterance-order recovery network, and a joint trainer whose
//! auxiliary weight decays linearly to zero mid-training.

pub mod aux;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod infer;
pub mod masks;
pub mod model;
pub mod ordernet;
pub mod synth;
pub mod trainer;

pub use error::{AuxError, Result};
