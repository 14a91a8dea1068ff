//! Change captioning for bi-temporal imagery, at desk scale.
//!
//! The model pairs a caption branch with an auxiliary pixel-level
//! change-detection branch trained on pseudo-labels; a cross-attention
//! fusion stack injects the detection features into the caption pathway.
//! Everything runs on CPU over a small reverse-mode autodiff core:
//!
//! - [`tensor`]: autodiff tensors (conv, deconv, attention primitives,
//!   losses) plus finite-difference gradient checking,
//! - [`data`]: synthetic bi-temporal scene generation, pseudo-label
//!   corruption, and the LEVIR-CC-compatible dataset layout,
//! - [`model`]: the siamese encoder, both branches, and their losses,
//! - [`train`]: Adam, the joint training loop, greedy/beam generation,
//! - [`metrics`]: BLEU / ROUGE-L / METEOR-lite / CIDEr and the composite
//!   score, with published benchmark rows as fixtures,
//! - [`checkpoint`]: the binary parameter container.

pub mod checkpoint;
pub mod data;
pub mod metrics;
pub mod model;
pub mod num;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod train;

pub use num::Real;
pub use tensor::Tensor;
