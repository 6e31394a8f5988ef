use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAX_ITERATIONS: usize = 300;
pub const SHIFT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel<T> {
    /// `(k, dim)`
    pub centroids: Tensor<T>,
    /// Index of the cluster holding tissue patches, once identified.
    pub useful_cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T> {
    pub model: KMeansModel<T>,
    pub labels: Vec<usize>,
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub objective: Vec<f64>,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).to_f64_lossy();
            d * d
        })
        .sum()
}

impl<T: Scalar> KMeansModel<T> {
    pub fn k(&self) -> usize {
        self.centroids.shape()[0]
    }

    /// Nearest centroid, lowest index on ties.
    pub fn assign(&self, point: &[T]) -> usize {
        let dim = self.centroids.shape()[1];
        let mut best = (0, f64::INFINITY);
        for (j, c) in self.centroids.data().chunks_exact(dim).enumerate() {
            let d = sq_dist(point, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        best.0
    }

    pub fn predict(&self, points: &Tensor<T>) -> Result<Vec<usize>> {
        let (_, dim) = points.matrix_dims()?;
        if dim != self.centroids.shape()[1] {
            return Err(Error::shape(
                "kmeans predict",
                format!("dim {}", self.centroids.shape()[1]),
                format!("dim {dim}"),
            ));
        }
        Ok(points
            .data()
            .chunks_exact(dim)
            .map(|p| self.assign(p))
            .collect())
    }
}

/// k-means++ seeding: first centre uniform, later ones drawn with
/// probability proportional to squared distance from the nearest chosen
/// centre.
pub fn kmeans_plus_plus<T: Scalar>(points: &Tensor<T>, k: usize, seed: u64) -> Result<Tensor<T>> {
    let (n, dim) = points.matrix_dims()?;
    if k == 0 || n < k {
        return Err(Error::invalid(format!(
            "k-means needs at least k={k} points, got {n}"
        )));
    }
    let rows: Vec<&[T]> = points.data().chunks_exact(dim).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, rows[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                cum += d;
                if cum > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (d, r) in d2.iter_mut().zip(&rows) {
            *d = d.min(sq_dist(r, rows[next]));
        }
    }
    let mut data = Vec::with_capacity(k * dim);
    for &i in &chosen {
        data.extend_from_slice(rows[i]);
    }
    Tensor::from_vec(&[k, dim], data)
}

/// Seeded k-means++ followed by Lloyd iterations.
pub fn kmeans_fit<T: Scalar>(points: &Tensor<T>, k: usize, seed: u64) -> Result<KMeansFit<T>> {
    let init = kmeans_plus_plus(points, k, seed)?;
    kmeans_fit_from(points, init)
}

/// Lloyd iterations from explicit initial centroids, until every centroid
/// moves less than [`SHIFT_TOLERANCE`] or [`MAX_ITERATIONS`] is reached. An
/// empty cluster keeps its previous centroid.
pub fn kmeans_fit_from<T: Scalar>(points: &Tensor<T>, init: Tensor<T>) -> Result<KMeansFit<T>> {
    let (n, dim) = points.matrix_dims()?;
    let (k, cdim) = init.matrix_dims()?;
    if cdim != dim {
        return Err(Error::shape(
            "kmeans init",
            format!("dim {dim}"),
            format!("dim {cdim}"),
        ));
    }
    if n < k {
        return Err(Error::invalid(format!(
            "k-means needs at least k={k} points, got {n}"
        )));
    }
    let rows: Vec<&[T]> = points.data().chunks_exact(dim).collect();
    let mut model = KMeansModel {
        centroids: init,
        useful_cluster: None,
    };
    let mut labels = vec![0; n];
    let mut objective = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut wcss = 0.0;
        for (l, r) in labels.iter_mut().zip(&rows) {
            *l = model.assign(r);
            wcss += sq_dist(r, &model.centroids.data()[*l * dim..(*l + 1) * dim]);
        }
        objective.push(wcss);

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (&l, r) in labels.iter().zip(&rows) {
            counts[l] += 1;
            for (s, &v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(r.iter()) {
                *s += v.to_f64_lossy();
            }
        }
        let mut max_shift = 0.0f64;
        let cent = model.centroids.data_mut();
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let mut shift = 0.0;
            for d in 0..dim {
                let new = T::of(sums[j * dim + d] / counts[j] as f64);
                let delta = (new - cent[j * dim + d]).to_f64_lossy();
                shift += delta * delta;
                cent[j * dim + d] = new;
            }
            max_shift = max_shift.max(shift.sqrt());
        }
        if max_shift < SHIFT_TOLERANCE {
            break;
        }
    }
    // Final labels against the converged centroids.
    for (l, r) in labels.iter_mut().zip(&rows) {
        *l = model.assign(r);
    }
    Ok(KMeansFit {
        model,
        labels,
        iterations,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_two_clusters() {
        let pts = Tensor::<f64>::from_vec(&[2, 2], vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        for seed in 0..8 {
            let fit = kmeans_fit(&pts, 2, seed).unwrap();
            assert_ne!(fit.labels[0], fit.labels[1]);
            let c = fit.model.centroids.data();
            let mut got = vec![(c[0], c[1]), (c[2], c[3])];
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(got, vec![(0.0, 0.0), (3.0, 4.0)]);
        }
    }

    #[test]
    fn fewer_points_than_k_is_error() {
        let pts = Tensor::<f64>::zeros(&[1, 3]);
        assert!(kmeans_fit(&pts, 2, 0).is_err());
    }

    #[test]
    fn objective_never_increases() {
        let pts =
            Tensor::<f64>::from_fn(&[60, 2], |i| ((i * 37 % 101) as f64).sin() * (i % 5) as f64);
        let fit = kmeans_fit(&pts, 2, 3).unwrap();
        for w in fit.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", fit.objective);
        }
    }
}
