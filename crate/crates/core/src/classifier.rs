//! The three-block CNN patch classifier: assembly, training and prediction.
//!
//! ```text
//! conv 3×3 ×32 → ReLU → maxpool p1
//! conv 3×3 ×32 → ReLU → maxpool p2
//! conv 3×3 ×64 → ReLU → maxpool p3
//! flatten → dense 128 → ReLU → dense 3 (softmax at prediction time)
//! ```
//!
//! With 1000×1000 inputs and pools 5/5/5 this is the production network
//! (553,443 trainable parameters). Desk-scale runs use 64×64 inputs with
//! pools 4/2/2.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{images_to_batch, RgbImage};
use crate::layers::{
    softmax, sparse_ce_loss, Conv2dLayer, DenseLayer, Layer, LayerStack, MaxPoolLayer,
};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CONV_FILTERS: [usize; 3] = [32, 32, 64];
pub const HIDDEN_UNITS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub patch_size: usize,
    pub channels: usize,
    pub classes: usize,
    pub pools: [usize; 3],
}

impl ClassifierSpec {
    /// 1000×1000 RGB patches, pools 5/5/5.
    pub fn production() -> Self {
        ClassifierSpec {
            patch_size: 1000,
            channels: 3,
            classes: 3,
            pools: [5, 5, 5],
        }
    }

    /// 64×64 RGB patches, pools 4/2/2.
    pub fn desk() -> Self {
        ClassifierSpec {
            patch_size: 64,
            channels: 3,
            classes: 3,
            pools: [4, 2, 2],
        }
    }

    fn check(&self) -> Result<usize> {
        if self.channels == 0 || self.classes < 2 || self.pools.contains(&0) {
            return Err(Error::invalid(format!("invalid classifier spec {self:?}")));
        }
        let mut side = self.patch_size;
        let mut chain = vec![side.to_string()];
        for &p in &self.pools {
            if side == 0 || !side.is_multiple_of(p) {
                chain.push(format!("{side}/{p} not integral"));
                return Err(Error::invalid(format!(
                    "patch size {} incompatible with pool chain {:?}: {}",
                    self.patch_size,
                    self.pools,
                    chain.join(" -> ")
                )));
            }
            side /= p;
            chain.push(side.to_string());
        }
        Ok(side)
    }
}

fn uniform_fill<T: Scalar>(shape: &[usize], limit: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-limit..limit)))
}

/// He-uniform for ReLU layers: `U(±√(6 / fan_in))`.
fn he_conv<T: Scalar>(in_c: usize, out_c: usize, rng: &mut ChaCha8Rng) -> Result<Conv2dLayer<T>> {
    let limit = (6.0 / (in_c * 9) as f64).sqrt();
    Conv2dLayer::new(
        uniform_fill(&[out_c, in_c, 3, 3], limit, rng),
        Tensor::zeros(&[out_c]),
    )
}

fn dense_init<T: Scalar>(
    fan_in: usize,
    fan_out: usize,
    glorot: bool,
    rng: &mut ChaCha8Rng,
) -> Result<DenseLayer<T>> {
    let limit = if glorot {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    } else {
        (6.0 / fan_in as f64).sqrt()
    };
    DenseLayer::new(
        uniform_fill(&[fan_in, fan_out], limit, rng),
        Tensor::zeros(&[fan_out]),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T> {
    pub stack: LayerStack<T>,
    /// `(height, width, channels)` of one input patch.
    pub input_hwc: [usize; 3],
    /// Optimizer state carried between training sessions and into checkpoints.
    pub optimizer: Option<Adam<T>>,
}

/// Weights He-uniform for ReLU layers, Glorot-uniform for the output layer,
/// zero biases. Identical seeds give bit-identical weights.
pub fn build_model<T: Scalar>(spec: &ClassifierSpec, seed: u64) -> Result<Classifier<T>> {
    let final_side = spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut in_c = spec.channels;
    for (&filters, &pool) in CONV_FILTERS.iter().zip(&spec.pools) {
        layers.push(Layer::Conv2d(he_conv(in_c, filters, &mut rng)?));
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool(MaxPoolLayer::new(pool)?));
        in_c = filters;
    }
    let flat = final_side * final_side * in_c;
    layers.push(Layer::Flatten);
    layers.push(Layer::Dense(dense_init(
        flat,
        HIDDEN_UNITS,
        false,
        &mut rng,
    )?));
    layers.push(Layer::Relu);
    layers.push(Layer::Dense(dense_init(
        HIDDEN_UNITS,
        spec.classes,
        true,
        &mut rng,
    )?));
    Ok(Classifier {
        stack: LayerStack::new(layers),
        input_hwc: [spec.patch_size, spec.patch_size, spec.channels],
        optimizer: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam<T: Scalar>(&self) -> AdamConfig<T> {
        AdamConfig {
            learning_rate: T::of(self.learning_rate),
            beta1: T::of(self.beta1),
            beta2: T::of(self.beta2),
            epsilon: T::of(self.epsilon),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch_size and epochs must be positive"));
        }
        self.adam::<f64>().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    /// Loss on the very first mini-batch of the epoch, before its update.
    pub first_batch_loss: f64,
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Classifier<T> {
    pub fn param_count(&self) -> usize {
        self.stack.param_count()
    }

    pub fn classes(&self) -> usize {
        match self.stack.layers.last() {
            Some(Layer::Dense(d)) => d.out_features(),
            _ => 0,
        }
    }

    fn check_images(&self, images: &[RgbImage]) -> Result<()> {
        let [h, w, _] = self.input_hwc;
        if let Some(bad) = images.iter().find(|i| i.width() != w || i.height() != h) {
            return Err(Error::shape(
                "classifier input",
                format!("{w}x{h} patches"),
                format!("{}x{}", bad.width(), bad.height()),
            ));
        }
        Ok(())
    }

    /// Raw logits for an NHWC batch.
    pub fn logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.stack.forward(batch)
    }

    /// Class-probability rows, one per patch.
    pub fn predict(&self, images: &[RgbImage]) -> Result<Tensor<T>> {
        self.check_images(images)?;
        if images.is_empty() {
            return Ok(Tensor::zeros(&[0, self.classes()]));
        }
        let mut parts = Vec::new();
        for chunk in images.chunks(32) {
            let refs: Vec<&RgbImage> = chunk.iter().collect();
            let batch = images_to_batch::<T>(&refs)?;
            parts.push(softmax(&self.logits(&batch)?)?);
        }
        Tensor::concat_outer(&parts)
    }

    pub fn predict_labels(&self, images: &[RgbImage]) -> Result<Vec<usize>> {
        let probs = self.predict(images)?;
        let k = self.classes();
        Ok(probs.data().chunks_exact(k).map(argmax).collect())
    }

    /// Mean cross-entropy and parameter gradients over one batch.
    pub fn loss_and_grads(
        &self,
        batch: &Tensor<T>,
        labels: &[usize],
    ) -> Result<(T, Vec<Tensor<T>>)> {
        let g = self.batch_grads(batch, labels)?;
        Ok((g.loss, g.grads))
    }

    fn batch_grads(
        &self,
        batch: &Tensor<T>,
        labels: &[usize],
    ) -> Result<crate::layers::BatchGrads<T>> {
        if batch.shape().first() != Some(&labels.len()) {
            return Err(Error::shape(
                "loss_and_grads",
                format!("{:?} labels", batch.shape().first()),
                format!("{} labels", labels.len()),
            ));
        }
        self.stack
            .mean_loss_and_grads(batch, |i, out| sparse_ce_loss(out, &labels[i..i + 1]))
    }

    /// One Adam update on `batch`; returns the loss before the update.
    pub fn train_step(
        &mut self,
        batch: &Tensor<T>,
        labels: &[usize],
        adam: AdamConfig<T>,
    ) -> Result<T> {
        let g = self.batch_grads(batch, labels)?;
        if self.optimizer.is_none() {
            self.optimizer = Some(Adam::new(adam, &self.stack.params())?);
        }
        let opt = self.optimizer.as_mut().expect("initialized above");
        opt.step(self.stack.params_mut(), &g.grads)?;
        Ok(g.loss)
    }

    /// Mini-batch training with a seeded shuffle per epoch.
    pub fn train(
        &mut self,
        images: &[RgbImage],
        labels: &[usize],
        config: &TrainConfig,
    ) -> Result<Vec<EpochStats>> {
        config.validate()?;
        if images.is_empty() {
            return Err(Error::invalid("training on an empty dataset"));
        }
        if images.len() != labels.len() {
            return Err(Error::shape(
                "train",
                format!("{} labels", images.len()),
                format!("{} labels", labels.len()),
            ));
        }
        let classes = self.classes();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        self.check_images(images)?;

        let adam = config.adam::<T>();
        if self.optimizer.is_none() {
            self.optimizer = Some(Adam::new(adam, &self.stack.params())?);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..images.len()).collect();
        let mut history = Vec::with_capacity(config.epochs);

        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            let mut first_batch_loss = f64::NAN;
            for idx in order.chunks(config.batch_size) {
                let refs: Vec<&RgbImage> = idx.iter().map(|&i| &images[i]).collect();
                let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                let batch = images_to_batch::<T>(&refs)?;
                let g = self.batch_grads(&batch, &batch_labels)?;
                let loss = g.loss.to_f64_lossy();
                if first_batch_loss.is_nan() {
                    first_batch_loss = loss;
                }
                loss_sum += loss * idx.len() as f64;
                correct += g
                    .outputs
                    .iter()
                    .zip(&batch_labels)
                    .filter(|(out, &l)| argmax(out.data()) == l)
                    .count();
                let opt = self.optimizer.as_mut().expect("initialized above");
                opt.step(self.stack.params_mut(), &g.grads)?;
            }
            history.push(EpochStats {
                epoch: epoch + 1,
                loss: loss_sum / images.len() as f64,
                accuracy: correct as f64 / images.len() as f64,
                first_batch_loss,
            });
        }
        Ok(history)
    }

    pub fn cast<U: Scalar>(&self) -> Classifier<U> {
        Classifier {
            stack: self.stack.cast(),
            input_hwc: self.input_hwc,
            optimizer: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn production_chain_and_counts() {
        let model = build_model::<f32>(&ClassifierSpec::production(), 0).unwrap();
        let rows = model.stack.summary(&[1, 1000, 1000, 3]).unwrap();
        let shapes: Vec<Vec<usize>> = rows.iter().map(|r| r.output_shape.clone()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![1000, 1000, 32],
                vec![200, 200, 32],
                vec![200, 200, 32],
                vec![40, 40, 32],
                vec![40, 40, 64],
                vec![8, 8, 64],
                vec![128],
                vec![3],
            ]
        );
        let params: Vec<usize> = rows.iter().map(|r| r.params).collect();
        assert_eq!(params, vec![896, 0, 9_248, 0, 18_496, 0, 524_416, 387]);
        assert_eq!(model.param_count(), 553_443);
    }

    #[test]
    fn indivisible_patch_reports_chain() {
        let spec = ClassifierSpec {
            patch_size: 1001,
            ..ClassifierSpec::production()
        };
        let err = build_model::<f32>(&spec, 0).unwrap_err().to_string();
        assert!(err.contains("1001/5"), "{err}");
    }

    #[test]
    fn same_seed_same_weights() {
        let a = build_model::<f32>(&ClassifierSpec::desk(), 42).unwrap();
        let b = build_model::<f32>(&ClassifierSpec::desk(), 42).unwrap();
        let c = build_model::<f32>(&ClassifierSpec::desk(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_image_prediction_is_distribution() {
        let model = build_model::<f32>(&ClassifierSpec::desk(), 1).unwrap();
        let probs = model.predict(&[RgbImage::new(64, 64)]).unwrap();
        let s: f32 = probs.data().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(probs.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn wrong_patch_dims_rejected() {
        let model = build_model::<f32>(&ClassifierSpec::desk(), 1).unwrap();
        assert!(model.predict(&[RgbImage::new(32, 32)]).is_err());
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut model = build_model::<f32>(&ClassifierSpec::desk(), 1).unwrap();
        assert!(model.train(&[], &[], &TrainConfig::default()).is_err());
    }
}
