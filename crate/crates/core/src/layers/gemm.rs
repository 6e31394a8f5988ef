//! Small row-major matrix products used by the conv and dense kernels.
//!
//! Loop orders keep the innermost loop contiguous so it vectorizes.

use crate::scalar::Scalar;

/// `c (m×n) += a (m×k) · b (k×n)`
pub(crate) fn matmul_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            if a_ik == T::zero() {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (c_ij, &b_kj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_ik * b_kj;
            }
        }
    }
}

/// `c (k×n) += aᵀ · b` with `a (m×k)`, `b (m×n)`.
pub(crate) fn matmul_at_b_acc<T: Scalar>(
    a: &[T],
    b: &[T],
    c: &mut [T],
    m: usize,
    k: usize,
    n: usize,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            if a_ik == T::zero() {
                continue;
            }
            let c_row = &mut c[kk * n..(kk + 1) * n];
            for (c_kj, &b_ij) in c_row.iter_mut().zip(b_row) {
                *c_kj += a_ik * b_ij;
            }
        }
    }
}

/// `c (m×k) = a (m×n) · bᵀ` with `b (k×n)`.
pub(crate) fn matmul_a_bt<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, n: usize, k: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for kk in 0..k {
            let b_row = &b[kk * n..(kk + 1) * n];
            let mut acc = T::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            c[i * k + kk] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c = vec![0.0; m * n];
        matmul_acc(&a, &b, &mut c, m, k, n);
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
                assert!((c[i * n + j] - want).abs() < 1e-14);
            }
        }

        // aᵀ·c should equal the naive product as well.
        let mut at_c = vec![0.0; k * n];
        matmul_at_b_acc(&a, &c, &mut at_c, m, k, n);
        for t in 0..k {
            for j in 0..n {
                let want: f64 = (0..m).map(|i| a[i * k + t] * c[i * n + j]).sum();
                assert!((at_c[t * n + j] - want).abs() < 1e-13);
            }
        }

        let mut c_bt = vec![0.0; m * k];
        matmul_a_bt(&c, &b, &mut c_bt, m, n, k);
        for i in 0..m {
            for t in 0..k {
                let want: f64 = (0..n).map(|j| c[i * n + j] * b[t * n + j]).sum();
                assert!((c_bt[i * k + t] - want).abs() < 1e-13);
            }
        }
    }
}
