use graphseg::classifier::node_f1;
use graphseg::datasets::{sample_splits, sequence_frames, SequenceProtocol};
use graphseg::graph::{build_graph, EnhancedPoint, GraphBuildConfig, GraphMode};
use graphseg::image::BinaryMask;
use graphseg::metrics::{contour_f, dice, region_j};
use graphseg::prompts::{build_box, farthest_point_sampling, isolation_inliers, mahalanobis_inliers, FpsStart};
use proptest::prelude::*;

fn mask_strategy(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(any::<bool>(), w * h).prop_map(move |bits| BinaryMask::from_vec(w, h, bits).unwrap())
}

fn points_strategy(max: usize) -> impl Strategy<Value = Vec<[f32; 2]>> {
    proptest::collection::vec((0.0f32..100.0, 0.0f32..100.0), 2..max).prop_map(|v| v.into_iter().map(|(x, y)| [x, y]).collect())
}

fn nodes(points: &[[f32; 2]]) -> Vec<EnhancedPoint> {
    points
        .iter()
        .map(|p| EnhancedPoint {
            x: p[0],
            y: p[1],
            features: vec![p[0], p[1]],
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overlap_scores_are_consistent(a in mask_strategy(12, 10), b in mask_strategy(12, 10)) {
        let d = dice(&a, &b).unwrap();
        let j = region_j(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&j));
        prop_assert!(j <= d + 1e-12);
        prop_assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-12);
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert_eq!(j, region_j(&b, &a).unwrap());
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn contour_f_grows_with_tolerance(a in mask_strategy(12, 12), b in mask_strategy(12, 12)) {
        let mut last = 0.0;
        for tol in 0..4 {
            let f = contour_f(&a, &b, tol).unwrap();
            prop_assert!(f + 1e-12 >= last);
            prop_assert_eq!(f, contour_f(&b, &a, tol).unwrap());
            last = f;
        }
        prop_assert_eq!(contour_f(&a, &a, 0).unwrap(), 1.0);
    }

    #[test]
    fn knn_graphs_are_simple_and_connected_enough(points in points_strategy(80), k in 1usize..12, training in any::<bool>(), seed in any::<u64>()) {
        let mode = if training { GraphMode::Training } else { GraphMode::Inference };
        let cfg = GraphBuildConfig { k, mode, ..GraphBuildConfig::default() };
        let n = points.len();
        let g = build_graph(nodes(&points), (100, 100), 2, &cfg, seed).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for &(a, b) in g.edges() {
            prop_assert!(a < b && (b as usize) < n);
            prop_assert!(seen.insert((a, b)));
        }
        let want = k.min(n - 1);
        prop_assert!(g.degrees().iter().all(|&d| d >= want));
    }

    #[test]
    fn fps_spreads_out(points in points_strategy(60), take in 1usize..60, start in any::<prop::sample::Index>()) {
        let start = start.index(points.len());
        let picked = farthest_point_sampling(&points, take, FpsStart::Index(start));
        prop_assert_eq!(picked.len(), take.min(points.len()));
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), picked.len());
        if take < points.len() {
            prop_assert_eq!(picked[0], start);
            // Each pick is no farther from the chosen set than the previous one.
            let d = |a: [f32; 2], b: [f32; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
            let mut last = f32::INFINITY;
            for i in 1..picked.len() {
                let gap = picked[..i].iter().map(|&c| d(points[picked[i]], points[c])).fold(f32::INFINITY, f32::min);
                prop_assert!(gap <= last);
                last = gap;
            }
        }
    }

    #[test]
    fn boxes_cover_their_points(points in points_strategy(40)) {
        let b = build_box(&points).unwrap();
        prop_assert!(b.x_min <= b.x_max && b.y_min <= b.y_max);
        for p in &points {
            prop_assert!((b.x_min..=b.x_max).contains(&p[0]) && (b.y_min..=b.y_max).contains(&p[1]));
        }
    }

    #[test]
    fn mahalanobis_cut_is_monotone(points in points_strategy(60), lo in 0.6f64..1.0) {
        let pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0] as f64, p[1] as f64]).collect();
        let tight = mahalanobis_inliers(&pts, lo);
        let loose = mahalanobis_inliers(&pts, 1.0);
        prop_assert!(tight.iter().all(|i| loose.contains(i)));
        prop_assert_eq!(loose.len(), pts.len());
    }

    #[test]
    fn forest_keeps_most_points(points in points_strategy(120), seed in any::<u64>()) {
        let pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0] as f64, p[1] as f64]).collect();
        let kept = isolation_inliers(&pts, 50, 64.min(pts.len()), 0.1, seed);
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(kept.len() as f64 >= 0.85 * pts.len() as f64 - 1.0);
    }

    #[test]
    fn splits_keep_test_items_out_of_supports(size in 2usize..60, shots in 1usize..5, folds in 1usize..6, seed in any::<u64>()) {
        prop_assume!(shots < size);
        let splits = sample_splits(size, shots, folds, seed).unwrap();
        prop_assert_eq!(splits.len(), folds);
        for s in &splits {
            prop_assert_eq!(s.support.len(), shots);
            prop_assert!(s.support.iter().all(|i| !s.test.contains(i) && *i < size));
        }
        prop_assert_eq!(splits, sample_splits(size, shots, folds, seed).unwrap());
    }

    #[test]
    fn sequence_frames_are_sorted_and_bounded(len in 1usize..500) {
        for p in [SequenceProtocol::F, SequenceProtocol::FL, SequenceProtocol::FLM] {
            let f = sequence_frames(len, p).unwrap();
            prop_assert_eq!(f[0], 0);
            prop_assert!(f.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(*f.last().unwrap() < len);
        }
    }

    #[test]
    fn perfect_labels_score_one(labels in proptest::collection::vec(0usize..4, 1..50)) {
        prop_assert_eq!(node_f1(&labels, &labels, 4).unwrap(), 1.0);
    }
}
