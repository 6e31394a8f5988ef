//! Adam with bias-corrected moment estimates.
//!
//! ```text
//! m ← β1·m + (1−β1)·g
//! v ← β2·v + (1−β2)·g²
//! m̂ = m / (1−β1^t),  v̂ = v / (1−β2^t)
//! θ ← θ − α·m̂ / (√v̂ + ε)
//! ```

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        AdamConfig {
            learning_rate: T::of(0.001),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
        }
    }
}

impl<T: Scalar> AdamConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: T| b >= T::zero() && b < T::one();
        if !(self.learning_rate > T::zero())
            || !unit(self.beta1)
            || !unit(self.beta2)
            || !(self.epsilon > T::zero())
        {
            return Err(Error::invalid(format!(
                "adam needs lr > 0, betas in [0,1), eps > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
        }
    }
}

pub fn adam_step<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState<T>,
    config: &AdamConfig<T>,
) -> Result<()> {
    param.expect_same_shape("adam_step grad", grad)?;
    param.expect_same_shape("adam_step m", &state.m)?;
    param.expect_same_shape("adam_step v", &state.v)?;

    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let one = T::one();
    let (b1, b2) = (config.beta1, config.beta2);
    let m_corr = one / (one - b1.powi(t));
    let v_corr = one / (one - b2.powi(t));

    for (((p, &g), m), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(state.m.data_mut())
        .zip(state.v.data_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m * m_corr;
        let v_hat = *v * v_corr;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(())
}

/// Adam over a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig<T>,
    pub states: Vec<AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig<T>, params: &[&Tensor<T>]) -> Result<Self> {
        config.validate()?;
        Ok(Adam {
            config,
            states: params.iter().map(|p| AdamState::new(p.shape())).collect(),
        })
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::shape(
                "Adam::step",
                format!("{} parameter tensors", self.states.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for ((p, g), s) in params.into_iter().zip(grads).zip(&mut self.states) {
            adam_step(p, g, s, &self.config)?;
        }
        Ok(())
    }
}
