//! Pixel-level deep metric learning for image co-segmentation.
//!
//! The crate bundles a small f64 tensor engine with reverse-mode automatic
//! differentiation, three segmentation losses (cross-entropy, Dice, focal),
//! a pixel-level triplet loss over balanced foreground/background sample
//! sets, a Siamese encoder/correlation/decoder model, a synthetic shape
//! corpus generator, and a deterministic SGD trainer with CSV run logs.

pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod sampler;
pub mod seeds;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use mask::Mask;
pub use tensor::Tensor;
