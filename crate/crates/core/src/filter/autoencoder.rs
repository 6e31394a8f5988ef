use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{images_to_batch, RgbImage};
use crate::layers::{
    mse_loss, Conv2dLayer, DenseLayer, Layer, LayerStack, MaxPoolLayer, UpsampleLayer,
};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderConfig {
    /// Patches are area-downscaled to `input_size × input_size` first.
    pub input_size: usize,
    pub embedding_dim: usize,
    pub filters: [usize; 2],
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            input_size: 64,
            embedding_dim: 64,
            filters: [16, 8],
            epochs: 5,
            batch_size: 16,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

/// Convolutional autoencoder.
///
/// Encoder: conv ×16 → ReLU → pool 2 → conv ×8 → ReLU → pool 2 → flatten →
/// dense(embedding). Decoder mirrors it with dense → ReLU → reshape →
/// (upsample 2 → conv) ×2 → sigmoid, so the reconstruction has exactly the
/// input's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel<T> {
    pub stack: LayerStack<T>,
    /// Number of leading layers that make up the encoder.
    pub encoder_len: usize,
    pub input_size: usize,
    pub embedding_dim: usize,
}

fn uniform<T: Scalar>(shape: &[usize], limit: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-limit..limit)))
}

fn conv<T: Scalar>(in_c: usize, out_c: usize, rng: &mut ChaCha8Rng) -> Result<Layer<T>> {
    let limit = (6.0 / (in_c * 9) as f64).sqrt();
    Ok(Layer::Conv2d(Conv2dLayer::new(
        uniform(&[out_c, in_c, 3, 3], limit, rng),
        Tensor::zeros(&[out_c]),
    )?))
}

fn dense<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Result<Layer<T>> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Ok(Layer::Dense(DenseLayer::new(
        uniform(&[fan_in, fan_out], limit, rng),
        Tensor::zeros(&[fan_out]),
    )?))
}

impl<T: Scalar> AutoencoderModel<T> {
    pub fn build(config: &AutoencoderConfig) -> Result<Self> {
        let s = config.input_size;
        if s == 0 || !s.is_multiple_of(4) {
            return Err(Error::invalid(format!(
                "autoencoder input size must be a positive multiple of 4, got {s}"
            )));
        }
        let [f1, f2] = config.filters;
        let bottleneck = (s / 4) * (s / 4) * f2;
        if config.embedding_dim == 0 || config.embedding_dim >= s * s * 3 {
            return Err(Error::invalid(format!(
                "embedding dim {} must be positive and below the input size {}",
                config.embedding_dim,
                s * s * 3
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = vec![
            conv(3, f1, &mut rng)?,
            Layer::Relu,
            Layer::MaxPool(MaxPoolLayer::new(2)?),
            conv(f1, f2, &mut rng)?,
            Layer::Relu,
            Layer::MaxPool(MaxPoolLayer::new(2)?),
            Layer::Flatten,
            dense(bottleneck, config.embedding_dim, &mut rng)?,
        ];
        let encoder_len = encoder.len();
        let decoder = vec![
            dense(config.embedding_dim, bottleneck, &mut rng)?,
            Layer::Relu,
            Layer::Reshape {
                height: s / 4,
                width: s / 4,
                channels: f2,
            },
            Layer::Upsample(UpsampleLayer { factor: 2 }),
            conv(f2, f1, &mut rng)?,
            Layer::Relu,
            Layer::Upsample(UpsampleLayer { factor: 2 }),
            conv(f1, 3, &mut rng)?,
            Layer::Sigmoid,
        ];
        let mut layers = encoder;
        layers.extend(decoder);
        Ok(AutoencoderModel {
            stack: LayerStack::new(layers),
            encoder_len,
            input_size: s,
            embedding_dim: config.embedding_dim,
        })
    }

    fn encoder(&self) -> LayerStack<T> {
        LayerStack::new(self.stack.layers[..self.encoder_len].to_vec())
    }

    fn decoder(&self) -> LayerStack<T> {
        LayerStack::new(self.stack.layers[self.encoder_len..].to_vec())
    }

    /// Downscales each patch to the model's input size and stacks them.
    pub fn prepare(&self, patches: &[RgbImage]) -> Result<Tensor<T>> {
        let s = self.input_size;
        let small: Vec<RgbImage> = patches
            .iter()
            .map(|p| p.downscale_area(s, s))
            .collect::<Result<_>>()?;
        let refs: Vec<&RgbImage> = small.iter().collect();
        images_to_batch(&refs)
    }

    /// `(batch, embedding_dim)` embeddings.
    pub fn encode(&self, patches: &[RgbImage]) -> Result<Tensor<T>> {
        let encoder = self.encoder();
        let mut parts = Vec::new();
        for chunk in patches.chunks(32) {
            parts.push(encoder.forward(&self.prepare(chunk)?)?);
        }
        if parts.is_empty() {
            return Ok(Tensor::zeros(&[0, self.embedding_dim]));
        }
        Tensor::concat_outer(&parts)
    }

    pub fn decode(&self, embeddings: &Tensor<T>) -> Result<Tensor<T>> {
        self.decoder().forward(embeddings)
    }

    pub fn reconstruct(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.stack.forward(batch)
    }

    pub fn reconstruction_error(&self, patches: &[RgbImage]) -> Result<f64> {
        let x = self.prepare(patches)?;
        let y = self.reconstruct(&x)?;
        Ok(mse_loss(&y, &x)?.0.to_f64_lossy())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAutoencoder<T> {
    pub model: AutoencoderModel<T>,
    /// Mean reconstruction MSE per epoch, measured during training.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
}

/// Fits the autoencoder to minimise mean squared reconstruction error with
/// Adam. Deterministic for a fixed seed.
pub fn train_autoencoder<T: Scalar>(
    patches: &[RgbImage],
    config: &AutoencoderConfig,
) -> Result<TrainedAutoencoder<T>> {
    if patches.len() < 2 {
        return Err(Error::invalid(format!(
            "autoencoder training needs at least 2 patches, got {}",
            patches.len()
        )));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::invalid(
            "autoencoder epochs and batch size must be positive",
        ));
    }
    let mut model = AutoencoderModel::<T>::build(config)?;
    let data = model.prepare(patches)?;
    let adam_cfg = AdamConfig {
        learning_rate: T::of(config.learning_rate),
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg, &model.stack.params())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let parts: Vec<Tensor<T>> = idx.iter().map(|&i| data.slice_outer(i, i + 1)).collect();
            let batch = Tensor::concat_outer(&parts)?;
            let g = model.stack.mean_loss_and_grads(&batch, |i, out| {
                mse_loss(out, &batch.slice_outer(i, i + 1))
            })?;
            total += g.loss.to_f64_lossy() * idx.len() as f64;
            adam.step(model.stack.params_mut(), &g.grads)?;
        }
        epoch_losses.push(total / patches.len() as f64);
    }
    let final_loss = *epoch_losses.last().expect("epochs > 0");
    Ok(TrainedAutoencoder {
        model,
        epoch_losses,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> AutoencoderConfig {
        AutoencoderConfig {
            input_size: 16,
            embedding_dim: 8,
            ..Default::default()
        }
    }

    #[test]
    fn roundtrip_shape_matches_input() {
        let model = AutoencoderModel::<f32>::build(&AutoencoderConfig::default()).unwrap();
        let x = Tensor::zeros(&[2, 64, 64, 3]);
        assert_eq!(model.reconstruct(&x).unwrap().shape(), x.shape());
        let chain = model.stack.shape_chain(&[5, 64, 64, 3]).unwrap();
        assert_eq!(chain[model.encoder_len - 1], vec![5, 64]);
    }

    #[test]
    fn encode_shape_and_determinism() {
        let model = AutoencoderModel::<f32>::build(&small_config()).unwrap();
        let img = RgbImage::from_fn(32, 32, |x, y| [(x * 8) as u8, (y * 8) as u8, 100]);
        let e = model.encode(&[img.clone(), img]).unwrap();
        assert_eq!(e.shape(), &[2, 8]);
        assert_eq!(e.data()[..8], e.data()[8..]);
    }

    #[test]
    fn rejects_bad_sizes() {
        let cfg = AutoencoderConfig {
            input_size: 30,
            ..Default::default()
        };
        assert!(AutoencoderModel::<f32>::build(&cfg).is_err());
        assert!(train_autoencoder::<f32>(&[RgbImage::new(16, 16)], &small_config()).is_err());
    }
}
