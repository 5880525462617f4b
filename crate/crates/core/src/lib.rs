//! Class-incremental image captioning.
//!
//! A small convolutional encoder with a gated recurrent decoder is trained on a
//! sequence of tasks, each introducing unseen object classes, without access to
//! the data of earlier tasks. Five strategies against forgetting are provided:
//! plain fine-tuning, encoder freezing, decoder freezing, pseudo-labeling and
//! encoder feature distillation. The crate also builds class-incremental splits
//! from COCO-style annotations, generates a synthetic captioning dataset, and
//! scores captions with BLEU, ROUGE-L, CIDEr and a lightweight METEOR.
//!
//! Numeric code is generic over [`Scalar`] (`f32` for training, `f64` for
//! gradient checks); the aliases below fix the common instantiations.

pub mod dataio;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod strategies;
pub mod tensor;
pub mod vocab;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use vocab::Vocabulary;

/// Single-precision model state, used for training and evaluation.
pub type ModelStateF32 = model::ModelState<f32>;
/// Double-precision model state, used for gradient verification.
pub type ModelStateF64 = model::ModelState<f64>;
pub type FeatureF32 = model::Feature<f32>;
pub type FeatureF64 = model::Feature<f64>;
pub type TensorF32 = Tensor<f32>;
pub type TensorF64 = Tensor<f64>;
