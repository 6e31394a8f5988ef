use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    input.zip_map(grad_out, |x, g| if x > T::zero() { g } else { T::zero() })
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

#[inline]
fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    // Split by sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Takes the forward *output* `s`; `ds/dx = s(1-s)`.
pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    output.zip_map(grad_out, |s, g| g * s * (T::one() - s))
}

/// Row-wise softmax over a `(rows, classes)` tensor with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, k) = logits.matrix_dims()?;
    if k == 0 {
        return Err(Error::invalid("softmax over zero classes"));
    }
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        softmax_row(row);
    }
    Ok(out)
}

pub(crate) fn softmax_row<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Vector-Jacobian product of softmax given its output `y`:
/// `dx = y ⊙ (g − Σ g⊙y)` per row.
pub fn softmax_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    output.expect_same_shape("softmax_backward", grad_out)?;
    let (_, k) = output.matrix_dims()?;
    let mut grad = Tensor::zeros(output.shape());
    for ((gx, y), g) in grad
        .data_mut()
        .chunks_exact_mut(k)
        .zip(output.data().chunks_exact(k))
        .zip(grad_out.data().chunks_exact(k))
    {
        let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
        for ((d, &yi), &gi) in gx.iter_mut().zip(y).zip(g) {
            *d = yi * (gi - dot);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::<f64>::from_vec(&[2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
    }

    #[test]
    fn sigmoid_at_zero_and_extremes() {
        let x = Tensor::<f64>::from_vec(&[3], vec![0.0, -800.0, 800.0]).unwrap();
        let s = sigmoid(&x);
        assert_eq!(s.data()[0], 0.5);
        assert!(s.is_finite());
        assert_eq!(s.data()[2], 1.0);
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let s = softmax(&Tensor::<f64>::zeros(&[1, 3])).unwrap();
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = Tensor::<f32>::from_vec(&[1, 2], vec![1000.0, 1000.0]).unwrap();
        assert_eq!(softmax(&big).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_backward_matches_finite_difference() {
        let x = Tensor::<f64>::from_vec(&[1, 3], vec![0.3, -1.2, 0.8]).unwrap();
        let g = Tensor::from_vec(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let y = softmax(&x).unwrap();
        let analytic = softmax_backward(&y, &g).unwrap();
        let f = |x: &Tensor<f64>| -> f64 {
            let y = softmax(x).unwrap();
            y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
        };
        for i in 0..3 {
            let mut p = x.clone();
            p.data_mut()[i] += 1e-6;
            let mut m = x.clone();
            m.data_mut()[i] -= 1e-6;
            let num = (f(&p) - f(&m)) / 2e-6;
            assert!((num - analytic.data()[i]).abs() < 1e-8);
        }
    }
}
