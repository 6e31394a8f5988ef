//! Duodenal-biopsy patch classification: patch extraction, autoencoder +
//! k-means background filtering, percentile colour balancing, a small CNN
//! trained with Adam, and a multi-class evaluation suite.
//!
//! Numeric code is generic over [`Scalar`] (`f32` for training, `f64` for
//! gradient checks); the aliases below fix the common choices.

pub mod classifier;
pub mod color;
pub mod dataio;
pub mod error;
pub mod filter;
pub mod image;
pub mod layers;
pub mod metrics;
pub mod optim;
pub mod patching;
pub mod pipeline;
pub mod scalar;
pub mod tensor;

pub use classifier::{build_model, Classifier, ClassifierSpec, TrainConfig};
pub use error::{Error, Result};
pub use image::RgbImage;
pub use patching::{ClassLabel, Cluster, PatchRecord, Split};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Classifier32 = Classifier<f32>;
pub type Classifier64 = Classifier<f64>;
pub type LayerStack32 = layers::LayerStack<f32>;
pub type LayerStack64 = layers::LayerStack<f64>;
