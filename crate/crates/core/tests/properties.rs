mod common;

use cdee_core::classifier::{build_model, ClassifierSpec};
use cdee_core::color::{apply_balance, derive_params};
use cdee_core::dataio::checkpoint;
use cdee_core::dataio::manifest::Manifest;
use cdee_core::dataio::ppm::{decode_ppm, encode_ppm};
use cdee_core::filter::kmeans_fit;
use cdee_core::layers::{softmax, Conv2dLayer};
use cdee_core::metrics::{confusion, summary};
use cdee_core::optim::{adam_step, AdamConfig, AdamState};
use cdee_core::patching::{assign_split, patch_id};
use cdee_core::{ClassLabel, Cluster, PatchRecord, RgbImage, Split, Tensor};
use common::*;
use proptest::prelude::*;

fn image_strategy(max_side: usize) -> impl Strategy<Value = RgbImage> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h * 3)
            .prop_map(move |data| RgbImage::from_raw(w, h, data).unwrap())
    })
}

fn record_strategy() -> impl Strategy<Value = PatchRecord> {
    (
        "[A-Za-z0-9-]{1,8}",
        0usize..3,
        0usize..50,
        0usize..50,
        0usize..3,
        any::<bool>(),
    )
        .prop_map(|(slide, class, gx, gy, cluster, test)| PatchRecord {
            patch_id: patch_id(&slide, gx, gy),
            slide_id: slide,
            class_label: ClassLabel::from_index(class).unwrap(),
            grid_x: gx,
            grid_y: gy,
            cluster: [Cluster::Unassigned, Cluster::Useful, Cluster::NotUseful][cluster],
            split: if test { Split::Test } else { Split::Train },
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_matches_direct_summation(
        n in 1usize..3, h in 1usize..7, w in 1usize..7, cin in 1usize..4, cout in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let x = random_tensor(&[n, h, w, cin], &mut r);
        let k = random_tensor(&[cout, cin, 3, 3], &mut r);
        let b = random_tensor(&[cout], &mut r);
        let layer = Conv2dLayer::new(k.clone(), b.clone()).unwrap();
        let got = layer.forward(&x).unwrap();
        let want = naive_conv(&x, &k, b.data());
        prop_assert_eq!(got.shape(), want.shape());
        prop_assert!(relative_error(got.data(), want.data()) < 1e-12);
    }

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..6, cols in 1usize..6, scale in 0.1f64..500.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_tensor(&[rows, cols], &mut r).map(|v| v * scale);
        let p = softmax(&x).unwrap();
        for row in p.data().chunks(cols) {
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ppm_roundtrip(img in image_strategy(16)) {
        prop_assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn manifest_roundtrip(records in proptest::collection::vec(record_strategy(), 0..20)) {
        let mut seen = std::collections::HashSet::new();
        let records: Vec<_> = records.into_iter().filter(|r| seen.insert(r.patch_id.clone())).collect();
        let m = Manifest::new(records).unwrap();
        let back = Manifest::from_csv(&m.to_csv().unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn balance_is_monotone_and_zero_is_identity(img in image_strategy(12), pct in 0.0f64..10.0) {
        prop_assert_eq!(&apply_balance(&img, &derive_params(&img, 0.0).unwrap()).unwrap(), &img);
        let out = apply_balance(&img, &derive_params(&img, pct).unwrap()).unwrap();
        for c in 0..3 {
            let mut pairs: Vec<(u8, u8)> = img.as_raw().iter().skip(c).step_by(3)
                .zip(out.as_raw().iter().skip(c).step_by(3))
                .map(|(&a, &b)| (a, b))
                .collect();
            pairs.sort_unstable();
            prop_assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
        }
        for (o, px) in color_oracle(&img, pct).iter().zip(out.as_raw().chunks(3)) {
            for c in 0..3 {
                prop_assert!((px[c] as f64 - o[c]).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn adam_invariants(g in -100.0f64..100.0, steps in 1usize..30) {
        let cfg = AdamConfig::<f64>::default();
        let mut p = Tensor::from_vec(&[2], vec![0.3, -0.7]).unwrap();
        let grad = Tensor::from_vec(&[2], vec![g, -g]).unwrap();
        let mut s = AdamState::new(&[2]);
        for t in 1..=steps {
            let before = p.clone();
            adam_step(&mut p, &grad, &mut s, &cfg).unwrap();
            prop_assert_eq!(s.t, t as u64);
            prop_assert!(s.v.data().iter().all(|&v| v >= 0.0));
            for (a, b) in p.data().iter().zip(before.data()) {
                prop_assert!((a - b).abs() <= 10.0 * cfg.learning_rate);
            }
        }
    }

    #[test]
    fn metrics_follow_class_permutations(
        truth in proptest::collection::vec(0usize..3, 1..40),
        noise in proptest::collection::vec(0usize..3, 40),
        perm_idx in 0usize..6,
    ) {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let perm = perms[perm_idx];
        let pred: Vec<usize> = truth.iter().zip(&noise).map(|(&t, &n)| if n == 0 { (t + 1) % 3 } else { t }).collect();
        let s = summary(&confusion(&truth, &pred, 3).unwrap()).unwrap();
        let pt: Vec<usize> = truth.iter().map(|&t| perm[t]).collect();
        let pp: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
        let sp = summary(&confusion(&pt, &pp, 3).unwrap()).unwrap();
        prop_assert!((s.accuracy - sp.accuracy).abs() < 1e-12);
        prop_assert!((s.macro_avg.f1 - sp.macro_avg.f1).abs() < 1e-12);
        for c in 0..3 {
            prop_assert_eq!(s.per_class[c].support, sp.per_class[perm[c]].support);
            prop_assert!((s.per_class[c].f1 - sp.per_class[perm[c]].f1).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn checkpoint_roundtrip_is_bit_exact(seed in any::<u64>(), pools in prop_oneof![Just([2, 2, 2]), Just([1, 2, 4])], with_adam in any::<bool>()) {
        let spec = ClassifierSpec { patch_size: 8, channels: 3, classes: 3, pools };
        let mut model = build_model::<f32>(&spec, seed).unwrap();
        if with_adam {
            let mut r = rng(seed);
            let batch = random_tensor(&[2, 8, 8, 3], &mut r).cast::<f32>();
            model.train_step(&batch, &[0, 2], AdamConfig::default()).unwrap();
        }
        let bytes = checkpoint::encode(&model.stack, model.input_hwc, model.optimizer.as_ref()).unwrap();
        let back = checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(back.input_hwc, model.input_hwc);
        let bits = |ts: Vec<&Tensor<f32>>| ts.iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.stack.params()), bits(model.stack.params()));
        prop_assert_eq!(&back.stack, &model.stack);
        prop_assert_eq!(&back.optimizer, &model.optimizer);
        prop_assert_eq!(checkpoint::encode(&back.stack, back.input_hwc, back.optimizer.as_ref()).unwrap(), bytes);
    }

    #[test]
    fn kmeans_partition_ignores_point_order(seed in any::<u64>(), shift in 5.0f64..20.0) {
        let mut r = rng(seed);
        let mut pts = Vec::new();
        for i in 0..30 {
            let off = if i % 3 == 0 { shift } else { 0.0 };
            pts.push([off + random_tensor(&[1], &mut r).data()[0], off + random_tensor(&[1], &mut r).data()[0]]);
        }
        let to_tensor = |ps: &[[f64; 2]]| Tensor::from_vec(&[ps.len(), 2], ps.iter().flatten().copied().collect()).unwrap();
        let a = kmeans_fit(&to_tensor(&pts), 2, seed).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let b = kmeans_fit(&to_tensor(&rev), 2, seed ^ 1).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let same_a = a.labels[i] == a.labels[j];
                let (ri, rj) = (pts.len() - 1 - i, pts.len() - 1 - j);
                prop_assert_eq!(same_a, b.labels[ri] == b.labels[rj]);
            }
        }
    }

    #[test]
    fn split_is_slide_level(slides in 2usize..8, frac in 0.1f64..0.9, seed in any::<u64>()) {
        let mut records = Vec::new();
        for class in ClassLabel::ALL {
            for s in 0..slides {
                for gx in 0..3 {
                    let slide = format!("{class}-{s}");
                    records.push(PatchRecord {
                        patch_id: patch_id(&slide, gx, 0),
                        slide_id: slide,
                        class_label: class,
                        grid_x: gx,
                        grid_y: 0,
                        cluster: Cluster::Unassigned,
                        split: Split::Train,
                    });
                }
            }
        }
        assign_split(&mut records, frac, seed).unwrap();
        for chunk in records.chunks(3) {
            prop_assert!(chunk.iter().all(|r| r.split == chunk[0].split));
        }
        for class in ClassLabel::ALL {
            let of = |s| records.iter().any(|r| r.class_label == class && r.split == s);
            prop_assert!(of(Split::Train) && of(Split::Test));
        }
    }
}
