use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Non-overlapping max pooling (`stride == window`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPoolLayer {
    pub window: usize,
    pub stride: usize,
}

/// Winning flat input index for every output cell, plus the input shape the
/// indices refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

impl MaxPoolLayer {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("pool window must be positive"));
        }
        Ok(MaxPoolLayer {
            window,
            stride: window,
        })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [n, h, w, c] = *input else {
            return Err(Error::shape("maxpool", "NHWC input", format!("{input:?}")));
        };
        if h % self.window != 0 || w % self.window != 0 || h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "maxpool window {} requires spatial dims divisible by {}, got {h}x{w}",
                self.window, self.window
            )));
        }
        Ok(vec![n, h / self.window, w / self.window, c])
    }

    /// Max over each window; ties go to the first cell in row-major scan order.
    pub fn forward<T: Scalar>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
        let out_shape = self.output_shape(input.shape())?;
        let (n, h, w, c) = input.nhwc()?;
        let (oh, ow) = (out_shape[1], out_shape[2]);
        let win = self.window;
        let src = input.data();
        let mut out = Vec::with_capacity(n * oh * ow * c);
        let mut argmax = Vec::with_capacity(n * oh * ow * c);
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best_idx = ((b * h + oy * win) * w + ox * win) * c + ch;
                        let mut best = src[best_idx];
                        for dy in 0..win {
                            for dx in 0..win {
                                let idx = ((b * h + oy * win + dy) * w + ox * win + dx) * c + ch;
                                if src[idx] > best {
                                    best = src[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(best_idx);
                    }
                }
            }
        }
        let indices = PoolIndices {
            input_shape: input.shape().to_vec(),
            output_shape: out_shape.clone(),
            argmax,
        };
        Ok((Tensor::from_vec(&out_shape, out)?, indices))
    }

    /// Routes each upstream gradient to its argmax position.
    pub fn backward<T: Scalar>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if grad_out.shape() != indices.output_shape.as_slice() {
            return Err(Error::shape(
                "maxpool_backward",
                format!("{:?}", indices.output_shape),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let mut grad = Tensor::zeros(&indices.input_shape);
        let g = grad.data_mut();
        for (&idx, &v) in indices.argmax.iter().zip(grad_out.data()) {
            g[idx] += v;
        }
        Ok(grad)
    }
}

/// Nearest-neighbour upsampling by an integer factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpsampleLayer {
    pub factor: usize,
}

impl UpsampleLayer {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [n, h, w, c] = *input else {
            return Err(Error::shape("upsample", "NHWC input", format!("{input:?}")));
        };
        Ok(vec![n, h * self.factor, w * self.factor, c])
    }

    pub fn forward<T: Scalar>(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out_shape = self.output_shape(input.shape())?;
        let (n, h, w, c) = input.nhwc()?;
        let f = self.factor;
        let (oh, ow) = (h * f, w * f);
        let src = input.data();
        let mut out = Tensor::zeros(&out_shape);
        let dst = out.data_mut();
        for b in 0..n {
            for y in 0..oh {
                for x in 0..ow {
                    let s = ((b * h + y / f) * w + x / f) * c;
                    let d = ((b * oh + y) * ow + x) * c;
                    dst[d..d + c].copy_from_slice(&src[s..s + c]);
                }
            }
        }
        Ok(out)
    }

    pub fn backward<T: Scalar>(
        &self,
        input_shape: &[usize],
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let expect = self.output_shape(input_shape)?;
        if grad_out.shape() != expect.as_slice() {
            return Err(Error::shape(
                "upsample_backward",
                format!("{expect:?}"),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let [n, h, w, c] = *input_shape else {
            unreachable!()
        };
        let f = self.factor;
        let (oh, ow) = (h * f, w * f);
        let mut grad = Tensor::zeros(input_shape);
        let g = grad.data_mut();
        let src = grad_out.data();
        for b in 0..n {
            for y in 0..oh {
                for x in 0..ow {
                    let d = ((b * h + y / f) * w + x / f) * c;
                    let s = ((b * oh + y) * ow + x) * c;
                    for (gd, &gs) in g[d..d + c].iter_mut().zip(&src[s..s + c]) {
                        *gd += gs;
                    }
                }
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_two_pool_shapes() {
        let pool = MaxPoolLayer::new(5).unwrap();
        assert_eq!(
            pool.output_shape(&[1, 1000, 1000, 32]).unwrap(),
            vec![1, 200, 200, 32]
        );
        assert_eq!(
            pool.output_shape(&[1, 200, 200, 32]).unwrap(),
            vec![1, 40, 40, 32]
        );
        assert_eq!(
            pool.output_shape(&[1, 40, 40, 64]).unwrap(),
            vec![1, 8, 8, 64]
        );
    }

    #[test]
    fn indivisible_dims_are_rejected() {
        let pool = MaxPoolLayer::new(5).unwrap();
        let err = pool.output_shape(&[1, 12, 10, 1]).unwrap_err().to_string();
        assert!(err.contains("divisible by 5"), "{err}");
    }

    #[test]
    fn constant_input_picks_first_cell() {
        let pool = MaxPoolLayer::new(2).unwrap();
        let x = Tensor::<f32>::filled(&[1, 4, 4, 1], 3.0);
        let (y, idx) = pool.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.0));
        assert_eq!(idx.argmax, vec![0, 2, 8, 10]);
    }

    #[test]
    fn backward_places_one_per_window_and_conserves_mass() {
        let pool = MaxPoolLayer::new(2).unwrap();
        let x = Tensor::<f64>::from_fn(&[2, 4, 4, 3], |i| ((i * 7919) % 97) as f64);
        let (y, idx) = pool.forward(&x).unwrap();
        let ones = Tensor::filled(y.shape(), 1.0);
        let g = MaxPoolLayer::backward(&idx, &ones).unwrap();
        assert_eq!(g.sum(), ones.sum());
        assert_eq!(g.data().iter().filter(|&&v| v == 1.0).count(), y.len());
    }

    #[test]
    fn upsample_backward_sums_blocks() {
        let up = UpsampleLayer { factor: 2 };
        let x = Tensor::<f64>::from_fn(&[1, 2, 2, 1], |i| i as f64);
        let y = up.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4, 1]);
        assert_eq!(y.data()[5], 0.0);
        assert_eq!(y.data()[15], 3.0);
        let g = up
            .backward(x.shape(), &Tensor::filled(y.shape(), 1.0))
            .unwrap();
        assert!(g.data().iter().all(|&v| v == 4.0));
    }
}
