//! Independent reference implementations used as test oracles. Nothing here
//! calls into the code under test except to read inputs.
#![allow(dead_code)]

use cdee_core::layers::LayerStack;
use cdee_core::{RgbImage, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPSILON: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Random values kept at least `gap` away from zero, so ReLU kinks stay out
/// of finite-difference reach.
pub fn random_tensor_off_zero(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Same-padded stride-1 convolution by direct summation.
/// `input` NHWC, `kernels` (out, in, kh, kw).
pub fn naive_conv(input: &Tensor<f64>, kernels: &Tensor<f64>, bias: &[f64]) -> Tensor<f64> {
    let [n, h, w, cin] = input.shape().try_into().expect("rank 4 input");
    let [cout, kin, kh, kw] = kernels.shape().try_into().expect("rank 4 kernels");
    assert_eq!(cin, kin);
    let (ph, pw) = (kh as isize / 2, kw as isize / 2);
    let x = input.data();
    let k = kernels.data();
    let mut out = vec![0.0; n * h * w * cout];
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                for o in 0..cout {
                    let mut acc = bias[o];
                    for i in 0..cin {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let sy = y as isize + dy as isize - ph;
                                let sx = xx as isize + dx as isize - pw;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                let xi = ((b * h + sy as usize) * w + sx as usize) * cin + i;
                                let ki = ((o * kin + i) * kh + dy) * kw + dx;
                                acc += x[xi] * k[ki];
                            }
                        }
                    }
                    out[((b * h + y) * w + xx) * cout + o] = acc;
                }
            }
        }
    }
    Tensor::from_vec(&[n, h, w, cout], out).unwrap()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central difference of `f` with respect to `x[i]` for each listed index.
pub fn central_differences(
    x: &mut [f64],
    indices: &[usize],
    mut f: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    indices
        .iter()
        .map(|&i| {
            let orig = x[i];
            x[i] = orig + FD_EPSILON;
            let up = f(x);
            x[i] = orig - FD_EPSILON;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * FD_EPSILON)
        })
        .collect()
}

/// All indices when `len ≤ limit`, otherwise `limit` distinct random ones.
pub fn sample_indices(len: usize, limit: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= limit {
        return (0..len).collect();
    }
    let mut idx = rand::seq::index::sample(rng, len, limit).into_vec();
    idx.sort_unstable();
    idx
}

/// Worst relative error between analytic and numeric gradients of
/// `L = Σ out ⊙ probe` for the input and every parameter tensor of `stack`.
/// Returns `(input_error, per_param_errors)`.
pub fn check_stack_gradients(
    stack: &LayerStack<f64>,
    input: &Tensor<f64>,
    probe_seed: u64,
    per_tensor_limit: usize,
) -> (f64, Vec<f64>) {
    let mut r = rng(probe_seed);
    let out_shape = stack.forward(input).unwrap().shape().to_vec();
    let probe = random_tensor(&out_shape, &mut r);
    let loss = |s: &LayerStack<f64>, x: &Tensor<f64>| -> f64 {
        let out = s.forward(x).unwrap();
        out.data()
            .iter()
            .zip(probe.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let (_, caches) = stack.forward_train(input).unwrap();
    let (gin, gparams) = stack.backward(caches, probe.clone(), true).unwrap();
    let gin = gin.expect("input gradient requested");

    let mut x = input.data().to_vec();
    let idx = sample_indices(x.len(), per_tensor_limit, &mut r);
    let shape = input.shape().to_vec();
    let num = central_differences(&mut x, &idx, |v| {
        loss(stack, &Tensor::from_vec(&shape, v.to_vec()).unwrap())
    });
    let ana: Vec<f64> = idx.iter().map(|&i| gin.data()[i]).collect();
    let input_err = relative_error(&ana, &num);

    let mut param_errs = Vec::new();
    let mut work = stack.clone();
    for (p, g) in gparams.iter().enumerate() {
        let len = g.len();
        let idx = sample_indices(len, per_tensor_limit, &mut r);
        let mut num = Vec::with_capacity(idx.len());
        for &i in &idx {
            let orig = work.params()[p].data()[i];
            work.params_mut()[p].data_mut()[i] = orig + FD_EPSILON;
            let up = loss(&work, input);
            work.params_mut()[p].data_mut()[i] = orig - FD_EPSILON;
            let down = loss(&work, input);
            work.params_mut()[p].data_mut()[i] = orig;
            num.push((up - down) / (2.0 * FD_EPSILON));
        }
        let ana: Vec<f64> = idx.iter().map(|&i| g.data()[i]).collect();
        param_errs.push(relative_error(&ana, &num));
    }
    (input_err, param_errs)
}

/// AUC as the fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
pub fn pair_count_auc(positive: &[bool], scores: &[f64]) -> f64 {
    let mut concordant = 0.0;
    let mut pairs = 0.0;
    for (i, &pi) in positive.iter().enumerate() {
        if !pi {
            continue;
        }
        for (j, &pj) in positive.iter().enumerate() {
            if pj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                concordant += 1.0;
            } else if scores[i] == scores[j] {
                concordant += 0.5;
            }
        }
    }
    concordant / pairs
}

/// `counts[t][p]` by direct tally.
pub fn tally(truth: &[usize], pred: &[usize], k: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        m[t][p] += 1;
    }
    m
}

/// Per-class (precision, recall, f1) from a tally, zero for empty
/// denominators.
pub fn tally_scores(m: &[Vec<u64>]) -> Vec<(f64, f64, f64)> {
    let k = m.len();
    (0..k)
        .map(|c| {
            let tp = m[c][c] as f64;
            let col: u64 = (0..k).map(|t| m[t][c]).sum();
            let row: u64 = m[c].iter().sum();
            let p = if col == 0 { 0.0 } else { tp / col as f64 };
            let r = if row == 0 { 0.0 } else { tp / row as f64 };
            let f = if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            };
            (p, r, f)
        })
        .collect()
}

/// Per-pixel reference for percentile balancing: every channel is stretched
/// on its own so that its nearest-rank quantiles `lo`/`hi`, taken `pct`% in
/// from either end of the sorted values, land on 0 and 255. Channels with
/// `lo == hi` pass through. Returned unquantized.
pub fn color_oracle(image: &RgbImage, pct: f64) -> Vec<[f64; 3]> {
    let raw = image.as_raw();
    let n = raw.len() / 3;
    if pct == 0.0 {
        return raw
            .chunks(3)
            .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
            .collect();
    }
    let rank = |p: f64| (((p * n as f64) / 100.0).ceil() as usize).clamp(1, n);
    let mut bounds = [(0.0, 255.0, false); 3];
    for (c, b) in bounds.iter_mut().enumerate() {
        let mut v: Vec<u8> = raw.iter().skip(c).step_by(3).copied().collect();
        v.sort_unstable();
        let lo = v[rank(pct) - 1] as f64;
        let hi = v[rank(100.0 - pct) - 1] as f64;
        *b = (lo, hi, hi > lo);
    }
    raw.chunks(3)
        .map(|p| {
            std::array::from_fn(|c| {
                let (lo, hi, stretch) = bounds[c];
                let v = p[c] as f64;
                if stretch {
                    (255.0 * (v - lo) / (hi - lo)).clamp(0.0, 255.0)
                } else {
                    v
                }
            })
        })
        .collect()
}

pub fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
}
