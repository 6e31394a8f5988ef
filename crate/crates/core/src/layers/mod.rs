//! Differentiable layer kernels and the sequential [`LayerStack`] built from
//! them.

mod activation;
mod conv;
mod dense;
pub(crate) mod gemm;
mod loss;
mod pool;

use rayon::prelude::*;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, softmax, softmax_backward};
pub use conv::{Conv2dGrads, Conv2dLayer, Padding};
pub use dense::{DenseGrads, DenseLayer};
pub use loss::{mse_loss, sparse_ce_loss};
pub use pool::{MaxPoolLayer, PoolIndices, UpsampleLayer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2dLayer<T>),
    MaxPool(MaxPoolLayer),
    Upsample(UpsampleLayer),
    Dense(DenseLayer<T>),
    Relu,
    Sigmoid,
    /// `(n, h, w, c)` → `(n, h·w·c)`
    Flatten,
    /// `(n, f)` → `(n, h, w, c)`
    Reshape {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool(_) => "max_pool",
            Layer::Upsample(_) => "upsample",
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
            Layer::Flatten => "flatten",
            Layer::Reshape { .. } => "reshape",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.param_count(),
            Layer::Dense(d) => d.param_count(),
            _ => 0,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(c) => c.output_shape(input),
            Layer::MaxPool(p) => p.output_shape(input),
            Layer::Upsample(u) => u.output_shape(input),
            Layer::Dense(d) => match *input {
                [n, f] if f == d.in_features() => Ok(vec![n, d.out_features()]),
                _ => Err(Error::shape(
                    "dense",
                    format!("(batch, {})", d.in_features()),
                    format!("{input:?}"),
                )),
            },
            Layer::Relu | Layer::Sigmoid => Ok(input.to_vec()),
            Layer::Flatten => match input {
                [n, rest @ ..] if !rest.is_empty() => Ok(vec![*n, rest.iter().product()]),
                _ => Err(Error::shape("flatten", "rank ≥ 2", format!("{input:?}"))),
            },
            Layer::Reshape {
                height,
                width,
                channels,
            } => match *input {
                [n, f] if f == height * width * channels => Ok(vec![n, *height, *width, *channels]),
                _ => Err(Error::shape(
                    "reshape",
                    format!("(batch, {})", height * width * channels),
                    format!("{input:?}"),
                )),
            },
        }
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(c) => vec![&c.kernels, &c.bias],
            Layer::Dense(d) => vec![&d.weights, &d.bias],
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.kernels, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
            _ => Vec::new(),
        }
    }

    fn forward_cached(&self, x: Tensor<T>) -> Result<(Tensor<T>, Cache<T>)> {
        Ok(match self {
            Layer::Conv2d(c) => (c.forward(&x)?, Cache::Input(x)),
            Layer::Dense(d) => (d.forward(&x)?, Cache::Input(x)),
            Layer::MaxPool(p) => {
                let (y, idx) = p.forward(&x)?;
                (y, Cache::Pool(idx))
            }
            Layer::Upsample(u) => {
                let shape = x.shape().to_vec();
                (u.forward(&x)?, Cache::Shape(shape))
            }
            Layer::Relu => (relu(&x), Cache::Input(x)),
            Layer::Sigmoid => {
                let y = sigmoid(&x);
                (y.clone(), Cache::Output(y))
            }
            Layer::Flatten | Layer::Reshape { .. } => {
                let in_shape = x.shape().to_vec();
                let out_shape = self.output_shape(&in_shape)?;
                (x.reshape(&out_shape)?, Cache::Shape(in_shape))
            }
        })
    }

    /// Returns the input gradient (when requested) and this layer's
    /// parameter gradients in `params()` order.
    fn backward_cached(
        &self,
        cache: Cache<T>,
        grad: Tensor<T>,
        want_input_grad: bool,
    ) -> Result<(Option<Tensor<T>>, Vec<Tensor<T>>)> {
        Ok(match (self, cache) {
            (Layer::Conv2d(c), Cache::Input(x)) => {
                let (gi, gk, gb) = c.backward_impl(&x, &grad, want_input_grad)?;
                (gi, vec![gk, gb])
            }
            (Layer::Dense(d), Cache::Input(x)) => {
                let g = d.backward(&x, &grad)?;
                (Some(g.input), vec![g.weights, g.bias])
            }
            (Layer::MaxPool(_), Cache::Pool(idx)) => {
                (Some(MaxPoolLayer::backward(&idx, &grad)?), Vec::new())
            }
            (Layer::Upsample(u), Cache::Shape(s)) => (Some(u.backward(&s, &grad)?), Vec::new()),
            (Layer::Relu, Cache::Input(x)) => (Some(relu_backward(&x, &grad)?), Vec::new()),
            (Layer::Sigmoid, Cache::Output(y)) => (Some(sigmoid_backward(&y, &grad)?), Vec::new()),
            (Layer::Flatten | Layer::Reshape { .. }, Cache::Shape(s)) => {
                (Some(grad.reshape(&s)?), Vec::new())
            }
            _ => return Err(Error::invalid("layer cache does not match layer kind")),
        })
    }

    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        match self {
            Layer::Conv2d(c) => Layer::Conv2d(Conv2dLayer {
                kernels: c.kernels.cast(),
                bias: c.bias.cast(),
                padding: c.padding,
                stride: c.stride,
            }),
            Layer::Dense(d) => Layer::Dense(DenseLayer {
                weights: d.weights.cast(),
                bias: d.bias.cast(),
            }),
            Layer::MaxPool(p) => Layer::MaxPool(*p),
            Layer::Upsample(u) => Layer::Upsample(*u),
            Layer::Relu => Layer::Relu,
            Layer::Sigmoid => Layer::Sigmoid,
            Layer::Flatten => Layer::Flatten,
            Layer::Reshape {
                height,
                width,
                channels,
            } => Layer::Reshape {
                height: *height,
                width: *width,
                channels: *channels,
            },
        }
    }
}

/// Per-layer state saved by [`LayerStack::forward_train`].
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    Pool(PoolIndices),
    Shape(Vec<usize>),
}

/// One row of a layer summary: kind, output shape (batch axis dropped) and
/// trainable parameter count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSummary {
    pub kind: &'static str,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

/// Batch-mean loss and parameter gradients, plus each sample's output.
#[derive(Debug, Clone)]
pub struct BatchGrads<T> {
    pub loss: T,
    pub grads: Vec<Tensor<T>>,
    pub outputs: Vec<Tensor<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> LayerStack<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        LayerStack { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Output shape after every layer, computed from metadata only.
    pub fn shape_chain(&self, input: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut shape = input.to_vec();
        let mut chain = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
            chain.push(shape.clone());
        }
        Ok(chain)
    }

    /// Rows for the weight-bearing and pooling layers, activations and
    /// reshapes folded away.
    pub fn summary(&self, input: &[usize]) -> Result<Vec<LayerSummary>> {
        let chain = self.shape_chain(input)?;
        Ok(self
            .layers
            .iter()
            .zip(chain)
            .filter(|(l, _)| matches!(l, Layer::Conv2d(_) | Layer::MaxPool(_) | Layer::Dense(_)))
            .map(|(l, s)| LayerSummary {
                kind: l.kind(),
                output_shape: s[1..].to_vec(),
                params: l.param_count(),
            })
            .collect())
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward_cached(x)?.0;
        }
        Ok(x)
    }

    pub fn forward_train(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<Cache<T>>)> {
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward_cached(x)?;
            caches.push(c);
            x = y;
        }
        Ok((x, caches))
    }

    /// Backpropagates `grad_out` through the stack. Parameter gradients come
    /// back in [`params`](Self::params) order.
    pub fn backward(
        &self,
        caches: Vec<Cache<T>>,
        grad_out: Tensor<T>,
        want_input_grad: bool,
    ) -> Result<(Option<Tensor<T>>, Vec<Tensor<T>>)> {
        if caches.len() != self.layers.len() {
            return Err(Error::invalid("cache count does not match layer count"));
        }
        let mut per_layer: Vec<Vec<Tensor<T>>> = Vec::with_capacity(self.layers.len());
        let mut grad = Some(grad_out);
        for (i, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let g = grad.take().expect("gradient flows until the first layer");
            let need = want_input_grad || i > 0;
            let (gi, pg) = layer.backward_cached(cache, g, need)?;
            per_layer.push(pg);
            grad = gi;
        }
        per_layer.reverse();
        let grads = per_layer.into_iter().flatten().collect();
        Ok((if want_input_grad { grad } else { None }, grads))
    }

    /// Runs forward and backward one sample at a time (in parallel) and
    /// averages losses and parameter gradients in sample order, so the
    /// result does not depend on the thread count.
    ///
    /// `loss_fn(i, output)` returns the per-sample loss and its gradient
    /// with respect to the network output for sample `i`.
    pub fn mean_loss_and_grads<F>(&self, batch: &Tensor<T>, loss_fn: F) -> Result<BatchGrads<T>>
    where
        F: Fn(usize, &Tensor<T>) -> Result<(T, Tensor<T>)> + Sync,
    {
        let n = batch.shape().first().copied().unwrap_or(0);
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let per_sample: Vec<Result<(T, Vec<Tensor<T>>, Tensor<T>)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = batch.slice_outer(i, i + 1);
                let (out, caches) = self.forward_train(&x)?;
                let (loss, g) = loss_fn(i, &out)?;
                let (_, grads) = self.backward(caches, g, false)?;
                Ok((loss, grads, out))
            })
            .collect();

        let mut total = T::zero();
        let mut acc: Option<Vec<Tensor<T>>> = None;
        let mut outputs = Vec::with_capacity(n);
        for r in per_sample {
            let (loss, grads, out) = r?;
            total += loss;
            outputs.push(out);
            match acc.as_mut() {
                None => acc = Some(grads),
                Some(a) => {
                    for (s, g) in a.iter_mut().zip(&grads) {
                        s.add_assign(g)?;
                    }
                }
            }
        }
        let inv = T::one() / T::of(n as f64);
        let mut grads = acc.unwrap_or_default();
        for g in &mut grads {
            g.scale(inv);
        }
        Ok(BatchGrads {
            loss: total * inv,
            grads,
            outputs,
        })
    }

    pub fn cast<U: Scalar>(&self) -> LayerStack<U> {
        LayerStack {
            layers: self.layers.iter().map(Layer::cast).collect(),
        }
    }
}
