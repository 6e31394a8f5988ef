use crate::error::{Error, Result};
use crate::layers::activation::softmax_row;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Sparse categorical cross-entropy on raw logits.
///
/// Returns the batch-mean loss and `(softmax − onehot) / batch`.
pub fn sparse_ce_loss<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (batch, classes) = logits.matrix_dims()?;
    if labels.len() != batch {
        return Err(Error::shape(
            "sparse_ce_loss",
            format!("{batch} labels"),
            format!("{} labels", labels.len()),
        ));
    }
    if batch == 0 {
        return Err(Error::invalid("sparse_ce_loss on an empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let inv_batch = T::one() / T::of(batch as f64);
    let mut grad = logits.clone();
    let mut loss = T::zero();
    for (row, &label) in grad.data_mut().chunks_exact_mut(classes).zip(labels) {
        // log-softmax via log-sum-exp keeps the loss finite for large logits.
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        loss += lse - row[label];
        softmax_row(row);
        row[label] -= T::one();
        for v in row.iter_mut() {
            *v *= inv_batch;
        }
    }
    Ok((loss * inv_batch, grad))
}

/// Mean squared error over all elements, with its gradient.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    pred.expect_same_shape("mse_loss", target)?;
    if pred.is_empty() {
        return Err(Error::invalid("mse_loss on an empty tensor"));
    }
    let n = T::of(pred.len() as f64);
    let two = T::one() + T::one();
    let mut loss = T::zero();
    let grad = pred.zip_map(target, |p, t| two * (p - t) / n)?;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        loss += (p - t) * (p - t);
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_give_ln3() {
        let (loss, grad) = sparse_ce_loss(&Tensor::<f64>::zeros(&[2, 3]), &[0, 2]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        for row in grad.data().chunks(3) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_out_of_range_label() {
        assert!(sparse_ce_loss(&Tensor::<f32>::zeros(&[1, 3]), &[3]).is_err());
        assert!(sparse_ce_loss(&Tensor::<f32>::zeros(&[2, 3]), &[0]).is_err());
    }

    #[test]
    fn huge_logits_stay_finite() {
        let logits = Tensor::<f32>::from_vec(&[1, 3], vec![1e4, -1e4, 0.0]).unwrap();
        let (loss, grad) = sparse_ce_loss(&logits, &[1]).unwrap();
        assert!(loss.is_finite() && grad.is_finite());
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let a = Tensor::<f64>::from_fn(&[2, 2], |i| i as f64);
        let (l, g) = mse_loss(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}
