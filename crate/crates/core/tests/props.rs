//! Property tests over the crate's stated invariants.

use emofuse_core::data::{generate_synthetic, sample_frames, ClipMode, SynthConfig, FOLD_COUNT};
use emofuse_core::graph::Graph;
use emofuse_core::metrics::{compute_metrics, ConfusionMatrix};
use emofuse_core::optim::Schedule;
use emofuse_core::tensor::Tensor;
use proptest::prelude::*;

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(rows in prop::collection::vec(
        prop::collection::vec(-50.0f64..50.0, 1..8), 1..6)
    ) {
        let width = rows[0].len();
        prop_assume!(rows.iter().all(|r| r.len() == width));
        let mut g = Graph::new();
        let x = g.input(Tensor::from_rows(&rows).unwrap());
        let y = g.softmax_rows(x).unwrap();
        let out = g.value(y);
        for r in 0..rows.len() {
            let sum: f64 = out.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6, "row {r} sums to {sum}");
            prop_assert!(out.row(r).iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn softmax_shift_invariant(row in prop::collection::vec(-30.0f64..30.0, 2..8), shift in -100.0f64..100.0) {
        let mut g = Graph::new();
        let a = g.input(Tensor::from_rows(&[row.clone()]).unwrap());
        let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
        let b = g.input(Tensor::from_rows(&[shifted]).unwrap());
        let ya = g.softmax_rows(a).unwrap();
        let yb = g.softmax_rows(b).unwrap();
        for (x, y) in g.value(ya).data().iter().zip(g.value(yb).data()) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn frame_indices_sorted_in_range(f_tot in 1usize..200, t in 1usize..40) {
        for clips in sample_frames(f_tot, t, ClipMode::TwoClip).unwrap() {
            prop_assert_eq!(clips.len(), t);
            let mut prev = 0usize;
            for idx in clips {
                prop_assert!(idx < f_tot);
                prop_assert!(idx >= prev);
                prev = idx;
            }
        }
    }

    #[test]
    fn metrics_bounds_and_label_permutation(counts in prop::collection::vec(0u64..30, 9)) {
        prop_assume!(counts.iter().any(|c| *c > 0));
        let cm = ConfusionMatrix::from_counts(3, counts.clone()).unwrap();
        let m = compute_metrics(&cm).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.uar));
        prop_assert!((0.0..=1.0).contains(&m.war));

        let perm = [1usize, 2, 0];
        let mut permuted = vec![0u64; 9];
        for r in 0..3 {
            for c in 0..3 {
                permuted[perm[r] * 3 + perm[c]] = counts[r * 3 + c];
            }
        }
        let pm = compute_metrics(&ConfusionMatrix::from_counts(3, permuted).unwrap()).unwrap();
        prop_assert!((m.uar - pm.uar).abs() < 1e-12);
        prop_assert!((m.war - pm.war).abs() < 1e-12);
    }

    #[test]
    fn schedule_monotone_and_bounded(base in 1e-6f64..1.0, epochs in 1usize..60) {
        let s = Schedule { base_lr: base, total_epochs: epochs };
        let mut prev = f64::INFINITY;
        for step in 0..=epochs * 4 {
            let e = step as f64 / 4.0;
            let lr = s.lr_at(e).unwrap();
            prop_assert!(lr <= prev + 1e-18);
            prop_assert!((0.0..=base).contains(&lr));
            prev = lr;
        }
        prop_assert_eq!(s.lr_at(0.0).unwrap(), base);
        prop_assert_eq!(s.lr_at(epochs as f64).unwrap(), 0.0);
    }

    #[test]
    fn fold_partition_holds_for_any_sizing(per_class in 1usize..20, seed in 0u64..50) {
        let cfg = SynthConfig {
            samples_per_class: per_class,
            frames: 2,
            height: 16,
            width: 16,
            spec_rows: 16,
            spec_cols: 16,
            seed,
            ..SynthConfig::default()
        };
        let (_, manifest) = generate_synthetic(&cfg).unwrap();
        let mut seen = std::collections::HashSet::new();
        for e in &manifest.samples {
            prop_assert!((1..=FOLD_COUNT).contains(&e.fold));
            prop_assert!(seen.insert(e.id.clone()));
        }
        for class in 0..cfg.num_classes {
            let mut per_fold = [0usize; FOLD_COUNT];
            for e in manifest.samples.iter().filter(|e| e.label == class) {
                per_fold[e.fold - 1] += 1;
            }
            let ideal = per_class as f64 / FOLD_COUNT as f64;
            for count in per_fold {
                prop_assert!((count as f64 - ideal).abs() < 1.0);
            }
        }
    }
}
