//! Bidirectional graph GAN for mapping between structural and functional
//! brain connectivity, built on third-order tensor algebra.
//!
//! Modules, bottom-up:
//!
//! - [`tensor`]: third-order tensors, the modality-axis DFT and the t-product.
//! - [`spectral`]: multimodal Laplacian tensors and their per-frequency
//!   eigenbases.
//! - [`nn`]: layers with hand-written gradients, Adam, checkpoints.
//! - [`model`]: the bidirectional model, its losses and the training loop.
//! - [`synth`]: synthetic cohorts and the dataset directory format.
//! - [`analysis`]: metrics, connection counts and per-edge t-tests.

pub mod analysis;
pub mod error;
pub mod model;
pub mod nn;
pub mod spectral;
pub mod synth;
pub mod tensor;

pub use error::{Error, ErrorCategory, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/tensors.md")]
    struct Tensors;
    #[doc = include_str!("../../../book/src/spectral.md")]
    struct Spectral;
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/data.md")]
    struct Data;
    #[doc = include_str!("../../../book/src/analysis.md")]
    struct Analysis;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
