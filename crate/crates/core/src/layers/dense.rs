use crate::error::{Error, Result};
use crate::layers::gemm;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer, `output = input · W + b` with `W: (in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let (_, out) = weights.matrix_dims()?;
        if bias.shape() != [out] {
            return Err(Error::shape(
                "DenseLayer::new",
                format!("bias shape [{out}]"),
                format!("{:?}", bias.shape()),
            ));
        }
        Ok(DenseLayer { weights, bias })
    }

    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        DenseLayer {
            weights: Tensor::zeros(&[in_features, out_features]),
            bias: Tensor::zeros(&[out_features]),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        let (batch, feat) = input.matrix_dims()?;
        if feat != self.in_features() {
            return Err(Error::shape(
                "dense",
                format!("{} input features", self.in_features()),
                format!("{feat} input features"),
            ));
        }
        Ok(batch)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.check_input(input)?;
        let (i, o) = (self.in_features(), self.out_features());
        let mut out = Tensor::zeros(&[batch, o]);
        for row in out.data_mut().chunks_exact_mut(o) {
            row.copy_from_slice(self.bias.data());
        }
        gemm::matmul_acc(
            input.data(),
            self.weights.data(),
            out.data_mut(),
            batch,
            i,
            o,
        );
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<DenseGrads<T>> {
        let batch = self.check_input(input)?;
        let (i, o) = (self.in_features(), self.out_features());
        if grad_out.shape() != [batch, o] {
            return Err(Error::shape(
                "dense_backward",
                format!("grad_out [{batch}, {o}]"),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let mut gw = Tensor::zeros(&[i, o]);
        gemm::matmul_at_b_acc(input.data(), grad_out.data(), gw.data_mut(), batch, i, o);
        let mut gb = Tensor::zeros(&[o]);
        for row in grad_out.data().chunks_exact(o) {
            for (b, &g) in gb.data_mut().iter_mut().zip(row) {
                *b += g;
            }
        }
        let mut gi = Tensor::zeros(&[batch, i]);
        gemm::matmul_a_bt(
            grad_out.data(),
            self.weights.data(),
            gi.data_mut(),
            batch,
            o,
            i,
        );
        Ok(DenseGrads {
            input: gi,
            weights: gw,
            bias: gb,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_two_dense_counts() {
        assert_eq!(DenseLayer::<f32>::zeros(4096, 128).param_count(), 524_416);
        assert_eq!(DenseLayer::<f32>::zeros(128, 3).param_count(), 387);
    }

    #[test]
    fn forward_is_affine() {
        let layer = DenseLayer::new(
            Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap(),
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().data(), &[4.5, 5.5]);
        assert!(layer.forward(&Tensor::zeros(&[1, 3])).is_err());
    }
}
