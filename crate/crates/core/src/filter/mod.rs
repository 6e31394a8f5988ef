//! Background-patch filtering: autoencoder embeddings clustered with k-means
//! into a useful (tissue) and a not-useful (background) group.

mod autoencoder;
mod kmeans;

pub use autoencoder::{train_autoencoder, AutoencoderConfig, AutoencoderModel, TrainedAutoencoder};
pub use kmeans::{
    kmeans_fit, kmeans_fit_from, kmeans_plus_plus, KMeansFit, KMeansModel, MAX_ITERATIONS,
    SHIFT_TOLERANCE,
};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::patching::{ClassLabel, Cluster, PatchRecord};
use crate::scalar::Scalar;

/// Marks as useful the cluster whose member patches have the higher mean
/// per-patch pixel standard deviation. Tissue is textured, background is
/// near-uniform.
pub fn select_useful_cluster<T: Scalar>(
    mut model: KMeansModel<T>,
    patches: &[RgbImage],
    assignments: &[usize],
) -> Result<KMeansModel<T>> {
    if patches.len() != assignments.len() {
        return Err(Error::shape(
            "select_useful_cluster",
            format!("{} assignments", patches.len()),
            format!("{} assignments", assignments.len()),
        ));
    }
    let k = model.k();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in patches.iter().zip(assignments) {
        if a >= k {
            return Err(Error::invalid(format!(
                "assignment {a} out of range for k={k}"
            )));
        }
        sums[a] += p.mean_channel_std();
        counts[a] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("cluster {empty} is empty")));
    }
    let mut best = 0;
    for j in 1..k {
        if sums[j] / counts[j] as f64 > sums[best] / counts[best] as f64 {
            best = j;
        }
    }
    model.useful_cluster = Some(best);
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub clusters: Vec<Cluster>,
    pub kmeans: KMeansModel<f32>,
    pub autoencoder: TrainedAutoencoder<f32>,
}

/// Trains the autoencoder on all patches, clusters the embeddings with
/// k = 2 and labels each patch useful or not useful.
pub fn filter_patches(patches: &[RgbImage], config: &AutoencoderConfig) -> Result<FilterOutcome> {
    let autoencoder = train_autoencoder::<f32>(patches, config)?;
    let embeddings = autoencoder.model.encode(patches)?;
    let fit = kmeans_fit(&embeddings, 2, config.seed)?;
    let kmeans = select_useful_cluster(fit.model, patches, &fit.labels)?;
    let useful = kmeans.useful_cluster.expect("selected above");
    let clusters = fit
        .labels
        .iter()
        .map(|&l| {
            if l == useful {
                Cluster::Useful
            } else {
                Cluster::NotUseful
            }
        })
        .collect();
    Ok(FilterOutcome {
        clusters,
        kmeans,
        autoencoder,
    })
}

/// Per-class useful / not-useful counts with percentages, one row per class
/// plus a total row.
pub fn cluster_summary(records: &[PatchRecord]) -> String {
    let mut rows = Vec::new();
    let mut grand = (0usize, 0usize);
    for class in [ClassLabel::Cd, ClassLabel::Normal, ClassLabel::Ee] {
        let members = records.iter().filter(|r| r.class_label == class);
        let (mut useful, mut other) = (0, 0);
        for r in members {
            match r.cluster {
                Cluster::Useful => useful += 1,
                _ => other += 1,
            }
        }
        grand.0 += useful;
        grand.1 += other;
        rows.push((class.as_str(), useful, other));
    }
    rows.push(("Total", grand.0, grand.1));

    let pct = |n: usize, d: usize| {
        if d == 0 {
            0.0
        } else {
            100.0 * n as f64 / d as f64
        }
    };
    let mut out = String::from("class,total,useful,useful_pct,not_useful,not_useful_pct\n");
    for (name, u, o) in rows {
        let t = u + o;
        let _ = writeln!(out, "{name},{t},{u},{:.0},{o},{:.0}", pct(u, t), pct(o, t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn textured_cluster_is_selected_regardless_of_index() {
        let flat = RgbImage::from_fn(8, 8, |_, _| [250, 250, 250]);
        let tex = RgbImage::from_fn(8, 8, |x, y| {
            if (x + y) % 2 == 0 {
                [40, 20, 90]
            } else {
                [220, 120, 180]
            }
        });
        let patches = vec![flat.clone(), tex.clone(), flat, tex];
        let model = KMeansModel {
            centroids: Tensor::<f32>::zeros(&[2, 1]),
            useful_cluster: None,
        };
        let a = select_useful_cluster(model.clone(), &patches, &[0, 1, 0, 1]).unwrap();
        assert_eq!(a.useful_cluster, Some(1));
        let b = select_useful_cluster(model.clone(), &patches, &[1, 0, 1, 0]).unwrap();
        assert_eq!(b.useful_cluster, Some(0));
        assert!(select_useful_cluster(model, &patches, &[0, 0, 0, 0]).is_err());
    }
}
