//! Adaptation stack for audiovisual emotion recognition on top of frozen
//! unimodal transformer encoders.
//!
//! The crate is self-contained: a deterministic tensor/autodiff core, two
//! ViT-style encoders with learnable-prompt and fusion hook points, gated
//! bottleneck modality fusion, a temporal transformer head, an AdamW
//! training loop with recall metrics, a synthetic cross-modal dataset, and
//! a bit-exact sample file format.

pub mod attn;
pub mod check;
pub mod data;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod param;
pub mod prompts;
pub mod scalar;
pub mod temporal;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
