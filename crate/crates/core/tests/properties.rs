use proptest::prelude::*;
use sassl::augment::{apply_transform, AugmentContext, CutoutFill, Transform};
use sassl::contrast::info_nce;
use sassl::dataio::{
    extract_window, generate_synthetic, load_dataset, make_splits, rereference_channel_average, write_dataset, LabelKind, Montage, Recording,
    SplitSpec, SyntheticParams, WindowPlan,
};
use sassl::eval::{metrics_from_confusion, rr_features, ConfusionMatrix};
use sassl::nn::gradcheck::random_tensor;
use sassl::nn::l2_normalize_rows;
use sassl::rng::stream;
use sassl::Tensor;

fn small_params() -> impl Strategy<Value = SyntheticParams> {
    (1usize..4, 1usize..4, 1usize..5, 2usize..6, any::<u64>()).prop_map(|(subjects, classes, channels, trials, seed)| {
        SyntheticParams {
            n_subjects: subjects,
            n_classes: classes,
            channels,
            rec_len: trials * 160,
            trial_len: 160,
            seed,
            ..SyntheticParams::default()
        }
    })
}

fn payload_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "f32"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthetic_is_deterministic_and_round_trips(p in small_params()) {
        let a: Vec<Recording<f32>> = generate_synthetic(&p).unwrap();
        let b: Vec<Recording<f32>> = generate_synthetic(&p).unwrap();
        prop_assert_eq!(&a, &b);
        let tmp = tempfile::tempdir().unwrap();
        let first = write_dataset(tmp.path().join("a"), &a).unwrap();
        let loaded: Vec<Recording<f32>> = load_dataset(&first).unwrap();
        prop_assert_eq!(&loaded, &a);
        write_dataset(tmp.path().join("b"), &loaded).unwrap();
        prop_assert_eq!(payload_bytes(&tmp.path().join("a")), payload_bytes(&tmp.path().join("b")));
    }

    #[test]
    fn rereference_is_idempotent(c in 2usize..6, w in 1usize..50, seed in any::<u64>()) {
        let r = Recording::new(0, 160.0, random_tensor(&[c, w], &mut stream(seed, 0)), (0..c).map(|i| format!("c{i}")).collect(), vec![]).unwrap();
        let once = rereference_channel_average(&r).unwrap();
        let twice = rereference_channel_average(&once).unwrap();
        for (x, y) in once.data.as_slice().iter().zip(twice.data.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn splits_never_share_a_window(p in small_params(), length in 20usize..200, stride in 10usize..200, intra in any::<bool>()) {
        let recs: Vec<Recording<f32>> = generate_synthetic(&p).unwrap();
        let ids: Vec<u32> = (0..p.n_subjects as u32).collect();
        let spec = if intra || ids.len() < 2 {
            SplitSpec::intrasubject(ids)
        } else {
            SplitSpec::intersubject(ids[1..].to_vec(), ids[..1].to_vec())
        };
        let plan = WindowPlan::Tiled { length, stride, label: Some(LabelKind::Task) };
        let (train, test) = make_splits(&recs, &spec, &plan).unwrap();
        let seen: std::collections::HashSet<_> = train.iter().map(|s| s.origin).collect();
        prop_assert!(test.iter().all(|s| !seen.contains(&s.origin)));
    }

    #[test]
    fn transforms_keep_shape_finiteness_and_determinism(
        which in 0usize..10,
        magnitude in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let (c, w) = (9, 64);
        let montage = Montage::grid(c);
        let pool = vec![Recording::new(0, 160.0, random_tensor(&[c, 3 * w], &mut stream(seed, 1)), (0..c).map(|i| format!("c{i}")).collect(), vec![]).unwrap()];
        let ctx = AugmentContext::new(&pool, 160.0).with_montage(&montage);
        let s = extract_window(&pool[0], 0, w, w, None).unwrap();
        let t = [
            Transform::TemporalCutout { window: (magnitude * w as f64) as usize, fill: CutoutFill::Mix },
            Transform::TemporalDelay { max_delay: (magnitude * 40.0) as usize },
            Transform::GaussianNoise { scale: 6.0 * magnitude },
            Transform::Bandstop { width_hz: 64.0 * magnitude },
            Transform::SignalMix { scale: magnitude },
            Transform::SpatialRotation { degrees: 180.0 * magnitude },
            Transform::SpatialShift { distance: 0.5 * magnitude },
            Transform::SensorDropout { p: magnitude },
            Transform::SensorCutout { radius: magnitude },
            Transform::Identity,
        ][which];
        let a = apply_transform(&s, &t, &ctx, &mut stream(seed, 3)).unwrap();
        let b = apply_transform(&s, &t, &ctx, &mut stream(seed, 3)).unwrap();
        prop_assert_eq!(a.data.shape(), s.data.shape());
        prop_assert!(a.data.all_finite());
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #[test]
    fn metrics_ignore_class_order(counts in prop::collection::vec(0u64..50, 9), perm in Just([2usize, 0, 1]).prop_shuffle()) {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<u64>> = counts.chunks(3).map(|r| r.to_vec()).collect();
        prop_assume!(rows.iter().flatten().sum::<u64>() > 0);
        let moved: Vec<Vec<u64>> = perm.iter().map(|&i| perm.iter().map(|&j| rows[i][j]).collect()).collect();
        let moved_names: Vec<String> = perm.iter().map(|&i| names[i].clone()).collect();
        let a = metrics_from_confusion(&ConfusionMatrix::with_names(names.clone(), rows).unwrap(), &[]).unwrap();
        let b = metrics_from_confusion(&ConfusionMatrix::with_names(moved_names, moved).unwrap(), &[]).unwrap();
        prop_assert!((a.overall_accuracy - b.overall_accuracy).abs() < 1e-12);
        prop_assert!((a.balanced_accuracy - b.balanced_accuracy).abs() < 1e-12);
        for n in &names {
            let (x, y) = (a.class(n).unwrap(), b.class(n).unwrap());
            prop_assert!((x.f1 - y.f1).abs() < 1e-12 && (x.sensitivity - y.sensitivity).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_matrix_is_fully_balanced(diag in prop::collection::vec(1u64..10_000, 1..6)) {
        let k = diag.len();
        let rows: Vec<Vec<u64>> = (0..k).map(|i| (0..k).map(|j| if i == j { diag[i] } else { 0 }).collect()).collect();
        let r = metrics_from_confusion(&ConfusionMatrix::from_counts(rows).unwrap(), &[]).unwrap();
        prop_assert!((r.balanced_accuracy - 100.0).abs() < 1e-12);
    }

    #[test]
    fn rr_features_ignore_time_scale(gaps in prop::collection::vec(0.2f64..2.0, 3..20), scale in 0.01f64..100.0) {
        let pos: Vec<f64> = gaps.iter().scan(0.0, |t, g| { *t += g; Some(*t) }).collect();
        let scaled: Vec<f64> = pos.iter().map(|p| p * scale).collect();
        let (a, b) = (rr_features(&pos).unwrap(), rr_features(&scaled).unwrap());
        for ((p, q), (r, s)) in a.iter().zip(&b) {
            prop_assert!((p - r).abs() < 1e-9 && (q - s).abs() < 1e-9);
        }
    }

    #[test]
    fn infonce_is_nonnegative(b in 1usize..6, n in 0usize..20, d in 2usize..10, tau in 0.01f64..1.0, seed in any::<u64>()) {
        let mut rng = stream(seed, 0);
        let mut unit = |rows| l2_normalize_rows(&random_tensor(&[rows, d], &mut rng)).unwrap().0;
        let (q, k, neg): (Tensor<f64>, Tensor<f64>, Tensor<f64>) = (unit(b), unit(b), unit(n));
        let l = info_nce(&q, &k, &neg, tau).unwrap();
        prop_assert!(l >= 0.0);
        if n == 0 {
            prop_assert_eq!(l, 0.0);
        }
    }
}
