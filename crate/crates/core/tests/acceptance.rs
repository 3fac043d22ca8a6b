//! End-to-end acceptance suite. Runs every criterion in order, prints one
//! PASS/FAIL line each and exits non-zero if any fails.
//!
//! ```text
//! cargo test -p graphseg --test acceptance
//! ```

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use graphseg::backends::BackendRegistry;
use graphseg::classifier::{epochs_for_classes, ClassifierConfig, ClassifierModel, ForwardMode, ModelType};
use graphseg::datasets::{remap_granularity, sequence_frames, synth, Granularity, GranularityMap, SequenceProtocol};
use graphseg::graph::{build_graph, EnhancedPoint, GraphBuildConfig, GraphMode};
use graphseg::harness::ablation::mean_node_f1;
use graphseg::harness::config::{JobConfig, TuneStage};
use graphseg::harness::jobs::{evaluate_predictor, run_train, TrainedPipeline};
use graphseg::harness::tune::SearchSpace;
use graphseg::image::{Image, LabelMask};
use graphseg::metrics::{contour_f, default_boundary_tolerance, dice, region_j, MetricSummary};
use graphseg::prompts::{farthest_point_sampling, isolation_inliers, mahalanobis_distances, mahalanobis_inliers, FpsStart, PromptType};
use rand::seq::SliceRandom;
use rand::Rng;

use common::*;

type Scenes = Vec<(Image, LabelMask)>;

/// Result of one criterion. `values` are the metric values the determinism
/// check compares across runs.
struct Outcome {
    pass: bool,
    detail: String,
    values: Vec<f64>,
}

fn outcome(checks: &[(bool, String)], values: Vec<f64>) -> Outcome {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.0).map(|c| c.1.as_str()).collect();
    let detail = if failed.is_empty() {
        checks.iter().map(|c| c.1.as_str()).collect::<Vec<_>>().join("; ")
    } else {
        format!("failed: {}", failed.join("; "))
    };
    Outcome {
        pass: failed.is_empty(),
        detail,
        values,
    }
}

fn check(ok: bool, msg: impl Into<String>) -> (bool, String) {
    (ok, msg.into())
}

fn truck_crane_scenes(count: usize, seed: u64, hole: bool) -> Scenes {
    let map = GranularityMap::builtin(Granularity::TruckCrane);
    synth::generate_dataset(count, (96, 96), seed, hole)
        .unwrap()
        .into_iter()
        .map(|(image, mask)| (image, remap_granularity(&mask, &map).unwrap()))
        .collect()
}

fn desk_config(seed: u64) -> JobConfig {
    let mut cfg = JobConfig::desk(Granularity::TruckCrane);
    cfg.seed = seed;
    cfg
}

fn train(cfg: &JobConfig, support: &[(Image, LabelMask)]) -> TrainedPipeline {
    let map = GranularityMap::builtin(Granularity::TruckCrane);
    let backends = cfg.build_backends(&BackendRegistry::with_defaults()).unwrap();
    run_train(cfg, backends, &map, support, None).unwrap().0
}

fn evaluate(pipeline: &TrainedPipeline, test: &[(Image, LabelMask)], ids: &[u64]) -> MetricSummary {
    let reports = evaluate_predictor(pipeline, test, ids, 3, Some(0)).unwrap();
    MetricSummary::from_reports(&reports)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// Metric oracles.

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut r = rng(1);
    let mut values = Vec::new();
    let mut mismatches = 0;
    let default_tol = default_boundary_tolerance(16, 16);
    for _ in 0..200 {
        let (a, b) = (random_mask(&mut r, 16, 16), random_mask(&mut r, 16, 16));
        let (pa, pb) = (pixels(&a), pixels(&b));
        let d = dice(&a, &b).unwrap();
        let j = region_j(&a, &b).unwrap();
        mismatches += usize::from(d != dice_ref(&pa, &pb)) + usize::from(j != jaccard_ref(&pa, &pb));
        values.extend([d, j]);
        for tol in BTreeSet::from([default_tol, 0, 1, 2, 3]) {
            let f = contour_f(&a, &b, tol).unwrap();
            mismatches += usize::from(f != contour_f_ref(&pa, &pb, tol));
            values.push(f);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        &[
            check(mismatches == 0, format!("{mismatches} mismatches over 200 pairs")),
            check(secs < 10.0, format!("{secs:.1}s < 10s")),
        ],
        values,
    )
}

// Geometry oracles.

/// Distinct integer coordinates, so squared distances are exact in f32 and
/// ties are common.
fn integer_points(r: &mut impl Rng, n: usize, extent: u32) -> Vec<[f32; 2]> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = (r.random_range(0..extent), r.random_range(0..extent));
        if seen.insert(p) {
            out.push([p.0 as f32, p.1 as f32]);
        }
    }
    out
}

fn knn_matches(coords: &[[f32; 2]], k: usize, seed: u64) -> bool {
    let nodes: Vec<EnhancedPoint> = coords
        .iter()
        .map(|c| EnhancedPoint {
            x: c[0],
            y: c[1],
            features: vec![0.0],
        })
        .collect();
    let cfg = GraphBuildConfig {
        k,
        mode: GraphMode::Inference,
        ..GraphBuildConfig::default()
    };
    let g = build_graph(nodes, (1024, 1024), 1, &cfg, seed).unwrap();
    let got: BTreeSet<(usize, usize)> = g.edges().iter().map(|&(a, b)| (a as usize, b as usize)).collect();
    got == knn_edges_ref(coords, k)
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut r = rng(2);
    let mut values = Vec::new();

    let mut knn_bad = 0;
    for s in 0..100 {
        let n = r.random_range(2..=300);
        let k = r.random_range(1..=32);
        let coords = integer_points(&mut r, n, if s % 2 == 0 { 40 } else { 1000 });
        knn_bad += usize::from(!knn_matches(&coords, k, s));
    }
    // One set large enough for the bucketed search path.
    let large = integer_points(&mut r, 6000, 2000);
    let large_ok = knn_matches(&large, 16, 0);

    let mut fps_bad = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=50);
        let points = integer_points(&mut r, n, 30);
        let take = r.random_range(1..=n);
        let start = r.random_range(0..n);
        let got = farthest_point_sampling(&points, take, FpsStart::Index(start));
        // Requests covering the whole set return it in input order.
        let want = if take >= n { (0..n).collect() } else { fps_ref(&points, take, start) };
        fps_bad += usize::from(got != want);
        values.extend(got.iter().map(|&i| i as f64));
    }

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(3..=200);
        let points: Vec<[f64; 2]> = (0..n)
            .map(|_| [r.random_range(-50.0..50.0), r.random_range(-20.0..20.0)])
            .collect();
        let got = mahalanobis_distances(&points);
        for (a, b) in got.iter().zip(mahalanobis_ref(&points)) {
            worst = worst.max((a - b).abs());
        }
        values.extend(got);
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        &[
            check(knn_bad == 0, format!("k-NN {knn_bad}/100 mismatched")),
            check(large_ok, "6000-point k-NN matches"),
            check(fps_bad == 0, format!("FPS {fps_bad}/100 mismatched")),
            check(worst <= 1e-9, format!("Mahalanobis max error {worst:.1e}")),
            check(secs < 30.0, format!("{secs:.1}s < 30s")),
        ],
        values,
    )
}

// Filtering behaviour.

fn criterion_3() -> Outcome {
    let mut good_seeds = 0;
    let mut values = Vec::new();
    for seed in 0..20u64 {
        let mut r = rng(300 + seed);
        let mut points: Vec<[f64; 2]> = (0..50)
            .map(|_| {
                let (rad, a) = (10.0 * r.random::<f64>().sqrt(), r.random_range(0.0..std::f64::consts::TAU));
                [100.0 + rad * a.cos(), 100.0 + rad * a.sin()]
            })
            .collect();
        for _ in 0..3 {
            let a = r.random_range(0.0..std::f64::consts::TAU);
            points.push([100.0 + 1000.0 * a.cos(), 100.0 + 1000.0 * a.sin()]);
        }
        let kept = isolation_inliers(&points, 100, 64.min(points.len()), 0.1, seed);
        let inliers_kept = kept.iter().filter(|&&i| i < 50).count();
        let outliers_removed = 3 - kept.iter().filter(|&&i| i >= 50).count();
        good_seeds += usize::from(outliers_removed >= 2 && inliers_kept >= 45);
        values.extend([inliers_kept as f64, outliers_removed as f64]);
    }

    let mut r = rng(3);
    let mut identity = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=150);
        let points: Vec<[f64; 2]> = (0..n)
            .map(|_| [r.random_range(0.0..500.0), r.random_range(0.0..500.0)])
            .collect();
        identity += usize::from(mahalanobis_inliers(&points, 1.0) == (0..n).collect::<Vec<_>>());
    }
    values.push(identity as f64);
    outcome(
        &[
            check(good_seeds >= 18, format!("forest clean on {good_seeds}/20 seeds (need 18)")),
            check(identity == 100, format!("threshold 1.0 identity on {identity}/100 sets")),
        ],
        values,
    )
}

// Classifier correctness.

fn model(kind: ModelType, input_dim: usize, seed: u64) -> ClassifierModel {
    let cfg = ClassifierConfig {
        model_type: kind,
        hidden_dim: 16,
        integration_dim: 8,
        dropout: 0.2,
        edge_dropout: 0.5,
        num_classes: 3,
        input_dim,
    };
    ClassifierModel::new(cfg, seed).unwrap()
}

/// Weighted NLL of the output layer in f64, from the embedding `h`.
fn head_loss(h: &[Vec<f64>], w: &[Vec<f64>], b: &[f64], labels: &[usize], weights: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (row, &y) in h.iter().zip(labels) {
        let logits: Vec<f64> = (0..b.len())
            .map(|c| b[c] + row.iter().zip(w).map(|(x, wr)| x * wr[c]).sum::<f64>())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        num += weights[y] * (logits[y] - lse);
        den += weights[y];
    }
    -num / den
}

fn to_rows(a: &ndarray::Array2<f32>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

fn criterion_4() -> Outcome {
    const DIM: usize = 6;
    let mut r = rng(4);
    let mut values = Vec::new();
    let (mut equi_worst, mut grad_worst, mut loss_worst, mut norm_worst) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for gi in 0..20u64 {
        let n = r.random_range(5..=60);
        let g = random_graph(400 + gi, n, DIM, 6);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let pg = g.permuted(&order).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
        let weights: Vec<f32> = (0..3).map(|_| r.random_range(0.1..1.0)).collect();
        for kind in ModelType::ALL {
            let m = model(kind, DIM, gi);

            let a = m.forward(&g, ForwardMode::Eval).unwrap();
            let b = m.forward(&pg, ForwardMode::Eval).unwrap();
            for (new, &old) in order.iter().enumerate() {
                for c in 0..3 {
                    equi_worst = equi_worst.max((a.node(old)[c] - b.node(new)[c]).abs() as f64);
                }
            }
            values.extend(a.matrix().iter().map(|&v| v as f64));

            for mode in [ForwardMode::Eval, ForwardMode::Train { seed: gi }] {
                let p = m.forward(&g, mode).unwrap();
                for row in p.matrix().rows() {
                    norm_worst = norm_worst.max((row.sum() as f64 - 1.0).abs());
                }
            }

            let (loss, grads) = m.loss_and_gradients(&g, &labels, &weights, ForwardMode::Eval).unwrap();
            let h = to_rows(&m.embed(&g).unwrap());
            let w = to_rows(m.param("mlp.head.weight").unwrap());
            let bias: Vec<f64> = m.param("mlp.head.bias").unwrap().iter().map(|&v| v as f64).collect();
            let wt: Vec<f64> = weights.iter().map(|&v| v as f64).collect();
            let exact = head_loss(&h, &w, &bias, &labels, &wt);
            loss_worst = loss_worst.max((loss as f64 - exact).abs() / exact.abs());

            let eps = 1e-6;
            let grad_of = |name: &str| grads.iter().find(|(n, _)| n == name).unwrap().1.clone();
            let (gw, gb) = (grad_of("mlp.head.weight"), grad_of("mlp.head.bias"));
            let (mut diff2, mut norm2) = (0.0, 0.0);
            for i in 0..w.len() {
                for c in 0..3 {
                    let (mut wp, mut wm) = (w.clone(), w.clone());
                    wp[i][c] += eps;
                    wm[i][c] -= eps;
                    let numeric = (head_loss(&h, &wp, &bias, &labels, &wt) - head_loss(&h, &wm, &bias, &labels, &wt)) / (2.0 * eps);
                    diff2 += (gw[[i, c]] as f64 - numeric).powi(2);
                    norm2 += numeric * numeric;
                }
            }
            for c in 0..3 {
                let (mut bp, mut bm) = (bias.clone(), bias.clone());
                bp[c] += eps;
                bm[c] -= eps;
                let numeric = (head_loss(&h, &w, &bp, &labels, &wt) - head_loss(&h, &w, &bm, &labels, &wt)) / (2.0 * eps);
                diff2 += (gb[[0, c]] as f64 - numeric).powi(2);
                norm2 += numeric * numeric;
            }
            grad_worst = grad_worst.max(diff2.sqrt() / norm2.sqrt().max(1e-12));
            values.push(loss as f64);
        }
    }
    outcome(
        &[
            check(equi_worst <= 1e-5, format!("equivariance max error {equi_worst:.1e}")),
            check(grad_worst <= 1e-3, format!("gradient relative error {grad_worst:.1e}")),
            check(loss_worst <= 1e-3, format!("loss relative error {loss_worst:.1e}")),
            check(norm_worst <= 1e-5, format!("row sums within {norm_worst:.1e} of 1")),
        ],
        values,
    )
}

// End-to-end few-shot.

/// Dice and J&F of one paired seed: supports start at scene `5 * seed`.
fn few_shot_run(data: &Scenes, seed: u64, shots: usize) -> (f64, f64) {
    let start = 5 * seed as usize;
    let pipeline = train(&desk_config(seed), &data[start..start + shots]);
    let ids: Vec<u64> = (25..45).collect();
    let s = evaluate(&pipeline, &data[25..45], &ids);
    (s.mean_dice, s.j_and_f)
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let data = truck_crane_scenes(45, 2024, false);
    let (mut five, mut one) = (Vec::new(), Vec::new());
    let mut values = Vec::new();
    for seed in 0..3 {
        let a = few_shot_run(&data, seed, 1);
        let b = few_shot_run(&data, seed, 5);
        values.extend([a.0, a.1, b.0, b.1]);
        one.push(a);
        five.push(b);
    }
    let dice5 = mean(&five.iter().map(|r| r.0).collect::<Vec<_>>());
    let jf5 = mean(&five.iter().map(|r| r.1).collect::<Vec<_>>());
    let jf1 = mean(&one.iter().map(|r| r.1).collect::<Vec<_>>());
    let secs = started.elapsed().as_secs_f64();
    outcome(
        &[
            check(dice5 >= 0.85, format!("5-shot Dice {dice5:.3}")),
            check(jf5 >= 0.80, format!("5-shot J&F {jf5:.3}")),
            check(jf1 >= 0.60, format!("1-shot J&F {jf1:.3}")),
            check(jf5 >= jf1, "J&F(5) >= J&F(1)"),
            check(secs < 600.0, format!("{secs:.0}s < 600s")),
        ],
        values,
    )
}

// Timing budget.

fn criterion_6() -> Outcome {
    let data = truck_crane_scenes(6, 2024, false);
    let mut cfg = desk_config(0);
    cfg.train.epochs = None;
    cfg.train.early_stopping = false;
    let map = GranularityMap::builtin(Granularity::TruckCrane);
    let backends = cfg.build_backends(&BackendRegistry::with_defaults()).unwrap();
    let started = Instant::now();
    let (pipeline, report) = run_train(&cfg, backends, &map, &data[..1], None).unwrap();
    let train_secs = started.elapsed().as_secs_f64();
    let mut infer_secs = 0.0f64;
    for (i, (image, _)) in data[1..].iter().enumerate() {
        let t = Instant::now();
        pipeline.infer(image, i as u64).unwrap();
        infer_secs = infer_secs.max(t.elapsed().as_secs_f64());
    }
    outcome(
        &[
            check(epochs_for_classes(3) == 750, "3-class budget is 750 epochs"),
            check(report.training.epochs_run == 750, format!("{} epochs run", report.training.epochs_run)),
            check(train_secs < 120.0, format!("training {train_secs:.1}s < 120s")),
            check(infer_secs < 2.0, format!("slowest inference {infer_secs:.2}s < 2s")),
        ],
        report.training.loss_curve.iter().map(|&v| v as f64).collect(),
    )
}

// Ablation direction.

/// Node F1 with and without text prompts, one support scene.
fn enhancement_run(seed: u64) -> (f64, f64) {
    let data = truck_crane_scenes(21, 500 + seed, false);
    let (support, test) = data.split_at(1);
    let ids: Vec<u64> = (0..test.len() as u64).collect();
    let mut f1 = [0.0; 2];
    for (slot, on) in [(0, true), (1, false)] {
        let mut cfg = desk_config(seed);
        cfg.train.epochs = Some(750);
        if !on {
            cfg.text_prompts.clear();
        }
        f1[slot] = mean_node_f1(&train(&cfg, support), test, &ids).unwrap();
    }
    (f1[0], f1[1])
}

/// Dice of point-and-box versus box-only prompts on scenes with holes.
fn hole_run(seed: u64) -> (f64, f64) {
    let data = truck_crane_scenes(21, 700 + seed, true);
    let (support, test) = data.split_at(1);
    let ids: Vec<u64> = (0..test.len() as u64).collect();
    let mut pipeline = train(&desk_config(seed), support);
    let mut dice = [0.0; 2];
    for (slot, kind) in [(0, PromptType::PointAndBox), (1, PromptType::Box)] {
        pipeline.prompts.prompt_type = kind;
        dice[slot] = evaluate(&pipeline, test, &ids).mean_dice;
    }
    (dice[0], dice[1])
}

fn criterion_7() -> Outcome {
    let mut values = Vec::new();
    let enh: Vec<(f64, f64)> = (0..5).map(enhancement_run).collect();
    let holes: Vec<(f64, f64)> = (0..3).map(hole_run).collect();
    for r in enh.iter().chain(&holes) {
        values.extend([r.0, r.1]);
    }
    let on = mean(&enh.iter().map(|r| r.0).collect::<Vec<_>>());
    let off = mean(&enh.iter().map(|r| r.1).collect::<Vec<_>>());
    let pb = mean(&holes.iter().map(|r| r.0).collect::<Vec<_>>());
    let b = mean(&holes.iter().map(|r| r.1).collect::<Vec<_>>());
    outcome(
        &[
            check(on >= off, format!("node F1 enhancement on {on:.3} vs off {off:.3}")),
            check(pb >= b, format!("hole Dice PB {pb:.3} vs B {b:.3}")),
        ],
        values,
    )
}

// Protocol conformance.

/// File, granularity, (NR, I, k), (BT, PT, SPS). Every row uses SAGE and PB.
type TunedRow = (&'static str, Granularity, (u32, usize, usize), (f64, f64, usize));

const TUNED: [TunedRow; 5] = [
    ("truck.toml", Granularity::Truck, (4, 512, 32), (1.0, 1.0, 20)),
    ("truck_crane.toml", Granularity::TruckCrane, (2, 1024, 32), (1.0, 0.8, 15)),
    ("low.toml", Granularity::Low, (4, 1024, 32), (0.8, 1.0, 20)),
    ("medium.toml", Granularity::Medium, (6, 1024, 8), (1.0, 0.8, 10)),
    ("high.toml", Granularity::High, (4, 512, 16), (0.8, 0.8, 15)),
];

fn in_tuning_ranges(p: &graphseg::harness::tune::TrialParams) -> bool {
    let tenths = |v: f64| (v * 10.0).round() / 10.0 == v;
    (2..=6).contains(&p.nms_radius)
        && (512..=2048).contains(&p.min_points)
        && (8..=32).contains(&p.k)
        && (256..=1024).contains(&p.hidden_dim)
        && (128..=512).contains(&p.integration_dim)
        && (0.99e-4..=5.01e-4).contains(&p.confidence_threshold)
        && [ModelType::Gat, ModelType::Gcn, ModelType::Sage].contains(&p.model_type)
        && (0.1..=0.3).contains(&p.dropout)
        && (0.3..=0.8).contains(&p.edge_dropout)
        && [PromptType::Point, PromptType::Box, PromptType::PointAndBox].contains(&p.prompt_type)
        && (0.6..=1.0).contains(&p.point_threshold)
        && (0.6..=1.0).contains(&p.box_threshold)
        && tenths(p.point_threshold)
        && tenths(p.box_threshold)
        && (5..=20).contains(&p.point_samples)
}

fn criterion_8() -> Outcome {
    use SequenceProtocol::{F, FL, FLM};
    let frames = [
        (10, F, vec![0]),
        (10, FL, vec![0, 9]),
        (10, FLM, vec![0, 4, 9]),
        (11, FLM, vec![0, 5, 10]),
        (2, FLM, vec![0, 1]),
        (1, FLM, vec![0]),
        (1, FL, vec![0]),
    ];
    let frames_ok = frames.iter().all(|(len, p, want)| sequence_frames(*len, *p).unwrap() == *want);

    let space = SearchSpace::default();
    let mut r = rng(8);
    let (mut draws, mut outside, mut invalid) = (0, 0, 0);
    let mut values = Vec::new();
    for stage in [TuneStage::Classification, TuneStage::Segmentation] {
        for _ in 0..2000 {
            let p = space.sample(&JobConfig::default(), stage, &mut r).unwrap();
            draws += 1;
            outside += usize::from(!in_tuning_ranges(&p));
            let mut cfg = JobConfig::default();
            p.apply(&mut cfg);
            invalid += usize::from(cfg.validate().is_err());
            values.extend([p.k as f64, p.point_samples as f64, p.box_threshold]);
        }
    }

    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut config_errors = Vec::new();
    for (file, g, (nr, points, k), (bt, pt, sps)) in TUNED {
        let text = std::fs::read_to_string(dir.join(file)).unwrap_or_default();
        if text != JobConfig::for_granularity(g).to_toml() {
            config_errors.push(format!("{file} differs from the built-in defaults"));
            continue;
        }
        let cfg = JobConfig::from_toml_str(&text).unwrap();
        let row = (
            cfg.detector.nms_radius,
            cfg.detector.min_points,
            cfg.graph.k,
            cfg.classifier.model_type,
            cfg.prompts.prompt_type,
            cfg.prompts.box_threshold,
            cfg.prompts.point_threshold,
            cfg.prompts.point_samples,
        );
        if row != (nr, points, k, ModelType::Sage, PromptType::PointAndBox, bt, pt, sps) {
            config_errors.push(format!("{file} holds {row:?}"));
        }
    }
    outcome(
        &[
            check(frames_ok, "F/FL/FLM frames"),
            check(outside == 0 && invalid == 0, format!("{draws} draws, {outside} outside ranges, {invalid} invalid")),
            check(config_errors.is_empty(), if config_errors.is_empty() { "5 default configs match".into() } else { config_errors.join(", ") }),
        ],
        values,
    )
}

// Determinism.

fn criterion_9(first: &[Option<Vec<f64>>]) -> Outcome {
    let mut checks = Vec::new();
    let cheap: [(usize, fn() -> Outcome); 5] = [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (8, criterion_8)];
    for (n, f) in cheap {
        let again = f().values;
        let same = first[n - 1].as_deref() == Some(&again[..]);
        checks.push(check(same, format!("criterion {n} repeats")));
    }
    // The training criteria are repeated on their first paired seed.
    let data = truck_crane_scenes(45, 2024, false);
    let (d, jf) = few_shot_run(&data, 0, 1);
    checks.push(check(
        first[4].as_deref().map(|v| &v[..2]) == Some(&[d, jf][..]),
        "criterion 5 seed 0 repeats",
    ));
    let (on, off) = enhancement_run(0);
    checks.push(check(
        first[6].as_deref().map(|v| &v[..2]) == Some(&[on, off][..]),
        "criterion 7 seed 0 repeats",
    ));
    outcome(&checks, Vec::new())
}

fn run(n: usize, f: impl FnOnce() -> Outcome) -> Option<Vec<f64>> {
    let started = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let secs = started.elapsed().as_secs_f64();
    match result {
        Ok(o) => {
            let verdict = if o.pass { "PASS" } else { "FAIL" };
            println!("criterion {n}: {verdict} ({}) [{secs:.1}s]", o.detail);
            o.pass.then_some(o.values)
        }
        Err(_) => {
            println!("criterion {n}: FAIL (panicked) [{secs:.1}s]");
            None
        }
    }
}

fn main() -> ExitCode {
    let criteria: [fn() -> Outcome; 8] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
    ];
    let mut values = Vec::new();
    for (i, f) in criteria.into_iter().enumerate() {
        values.push(run(i + 1, f));
    }
    let ninth = run(9, || criterion_9(&values));
    let passed = values.iter().filter(|v| v.is_some()).count() + usize::from(ninth.is_some());
    println!("acceptance: {passed}/9 criteria passed");
    if passed == 9 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
