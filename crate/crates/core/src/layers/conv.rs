use crate::error::{Error, Result};
use crate::layers::gemm;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `k / 2` on each side; output spatial dims equal input.
    SameZero,
}

/// 2-D convolution over NHWC batches with stride 1 and same-zero padding.
///
/// Kernels are stored `(out_channels, in_channels, k_h, k_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dLayer<T> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
    pub padding: Padding,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2dLayer<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let [out_c, in_c, kh, kw] = *kernels.shape() else {
            return Err(Error::shape(
                "Conv2dLayer::new",
                "kernels of rank 4 (out, in, k_h, k_w)",
                format!("{:?}", kernels.shape()),
            ));
        };
        if out_c == 0 || in_c == 0 || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid(format!(
                "conv kernels need positive channels and odd sizes, got {:?}",
                kernels.shape()
            )));
        }
        if bias.shape() != [out_c] {
            return Err(Error::shape(
                "Conv2dLayer::new",
                format!("bias shape [{out_c}]"),
                format!("{:?}", bias.shape()),
            ));
        }
        Ok(Conv2dLayer {
            kernels,
            bias,
            padding: Padding::SameZero,
            stride: 1,
        })
    }

    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Result<Self> {
        Self::new(
            Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            Tensor::zeros(&[out_channels]),
        )
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_hw(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }

    pub fn param_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [n, h, w, c] = *input else {
            return Err(Error::shape("conv2d", "NHWC input", format!("{input:?}")));
        };
        if c != self.in_channels() {
            return Err(Error::shape(
                "conv2d",
                format!("{} input channels", self.in_channels()),
                format!("{c} input channels"),
            ));
        }
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "conv2d input has empty spatial dims {input:?}"
            )));
        }
        Ok(vec![n, h, w, self.out_channels()])
    }

    /// Kernels rearranged to an `(k_h·k_w·in, out)` matrix matching the
    /// im2col column order `(ky, kx, ci)`.
    fn weight_matrix(&self) -> Vec<T> {
        let (out_c, in_c) = (self.out_channels(), self.in_channels());
        let (kh, kw) = self.kernel_hw();
        let k = self.kernels.data();
        let mut wm = vec![T::zero(); kh * kw * in_c * out_c];
        for o in 0..out_c {
            for ci in 0..in_c {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let row = (ky * kw + kx) * in_c + ci;
                        wm[row * out_c + o] = k[((o * in_c + ci) * kh + ky) * kw + kx];
                    }
                }
            }
        }
        wm
    }

    fn im2col(&self, sample: &[T], h: usize, w: usize, cols: &mut [T]) {
        let in_c = self.in_channels();
        let (kh, kw) = self.kernel_hw();
        let (ph, pw) = (kh / 2, kw / 2);
        let row_len = kh * kw * in_c;
        cols.fill(T::zero());
        for y in 0..h {
            for x in 0..w {
                let row = &mut cols[(y * w + x) * row_len..(y * w + x + 1) * row_len];
                for ky in 0..kh {
                    let sy = y as isize + ky as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let sx = x as isize + kx as isize - pw as isize;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = (sy as usize * w + sx as usize) * in_c;
                        let dst = (ky * kw + kx) * in_c;
                        row[dst..dst + in_c].copy_from_slice(&sample[src..src + in_c]);
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[T], h: usize, w: usize, sample_grad: &mut [T]) {
        let in_c = self.in_channels();
        let (kh, kw) = self.kernel_hw();
        let (ph, pw) = (kh / 2, kw / 2);
        let row_len = kh * kw * in_c;
        for y in 0..h {
            for x in 0..w {
                let row = &cols[(y * w + x) * row_len..(y * w + x + 1) * row_len];
                for ky in 0..kh {
                    let sy = y as isize + ky as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let sx = x as isize + kx as isize - pw as isize;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let dst = (sy as usize * w + sx as usize) * in_c;
                        let src = (ky * kw + kx) * in_c;
                        for (g, &c) in sample_grad[dst..dst + in_c]
                            .iter_mut()
                            .zip(&row[src..src + in_c])
                        {
                            *g += c;
                        }
                    }
                }
            }
        }
    }

    /// `out[n,y,x,j] = Σ_i (input_i ⋆ K_{i,j})[y,x] + b_j`. No activation.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out_shape = self.output_shape(input.shape())?;
        let (n, h, w, in_c) = input.nhwc()?;
        let out_c = self.out_channels();
        let (kh, kw) = self.kernel_hw();
        let row_len = kh * kw * in_c;
        let wm = self.weight_matrix();
        let bias = self.bias.data();

        let mut out = Tensor::zeros(&out_shape);
        let mut cols = vec![T::zero(); h * w * row_len];
        let in_stride = h * w * in_c;
        let out_stride = h * w * out_c;
        for b in 0..n {
            let sample = &input.data()[b * in_stride..(b + 1) * in_stride];
            let dst = &mut out.data_mut()[b * out_stride..(b + 1) * out_stride];
            for px in dst.chunks_exact_mut(out_c) {
                px.copy_from_slice(bias);
            }
            self.im2col(sample, h, w, &mut cols);
            gemm::matmul_acc(&cols, &wm, dst, h * w, row_len, out_c);
        }
        Ok(out)
    }

    /// Exact gradients of `Σ grad_out ⊙ forward(input)`.
    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Conv2dGrads<T>> {
        let (grad_input, kernels, bias) = self.backward_impl(input, grad_out, true)?;
        Ok(Conv2dGrads {
            input: grad_input.expect("input gradient requested"),
            kernels,
            bias,
        })
    }

    pub(crate) fn backward_impl(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        want_input_grad: bool,
    ) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>)> {
        let out_shape = self.output_shape(input.shape())?;
        if grad_out.shape() != out_shape.as_slice() {
            return Err(Error::shape(
                "conv2d_backward",
                format!("grad_out {out_shape:?}"),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let (n, h, w, in_c) = input.nhwc()?;
        let out_c = self.out_channels();
        let (kh, kw) = self.kernel_hw();
        let row_len = kh * kw * in_c;
        let wm = self.weight_matrix();

        let mut grad_wm = vec![T::zero(); row_len * out_c];
        let mut grad_bias = vec![T::zero(); out_c];
        let mut grad_input = want_input_grad.then(|| Tensor::zeros(input.shape()));
        let mut cols = vec![T::zero(); h * w * row_len];
        let mut grad_cols = vec![T::zero(); if want_input_grad { h * w * row_len } else { 0 }];
        let in_stride = h * w * in_c;
        let out_stride = h * w * out_c;

        for b in 0..n {
            let sample = &input.data()[b * in_stride..(b + 1) * in_stride];
            let g = &grad_out.data()[b * out_stride..(b + 1) * out_stride];
            for px in g.chunks_exact(out_c) {
                for (gb, &v) in grad_bias.iter_mut().zip(px) {
                    *gb += v;
                }
            }
            self.im2col(sample, h, w, &mut cols);
            gemm::matmul_at_b_acc(&cols, g, &mut grad_wm, h * w, row_len, out_c);
            if let Some(gi) = grad_input.as_mut() {
                gemm::matmul_a_bt(g, &wm, &mut grad_cols, h * w, out_c, row_len);
                let dst = &mut gi.data_mut()[b * in_stride..(b + 1) * in_stride];
                self.col2im_add(&grad_cols, h, w, dst);
            }
        }

        let mut grad_kernels = Tensor::zeros(self.kernels.shape());
        let gk = grad_kernels.data_mut();
        for o in 0..out_c {
            for ci in 0..in_c {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let row = (ky * kw + kx) * in_c + ci;
                        gk[((o * in_c + ci) * kh + ky) * kw + kx] = grad_wm[row * out_c + o];
                    }
                }
            }
        }
        Ok((
            grad_input,
            grad_kernels,
            Tensor::from_vec(&[out_c], grad_bias)?,
        ))
    }
}
