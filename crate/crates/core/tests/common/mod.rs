//! Independent reference implementations shared by the integration tests.
//! Everything here is written from the definitions, without calling the
//! crate's own geometry or metric code.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use graphseg::graph::{build_graph, EnhancedPoint, GraphBuildConfig, GraphMode, SceneGraph};
use graphseg::image::BinaryMask;
use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub type PixelSet = HashSet<(i64, i64)>;

pub fn pixels(mask: &BinaryMask) -> PixelSet {
    let mut out = HashSet::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                out.insert((x as i64, y as i64));
            }
        }
    }
    out
}

pub fn random_mask(r: &mut impl Rng, w: usize, h: usize) -> BinaryMask {
    // Mix of sparse noise, dense noise and blobs so empty, full and
    // structured masks all show up.
    match r.random_range(0..4) {
        0 => BinaryMask::from_fn(w, h, |_, _| r.random_bool(0.1)),
        1 => BinaryMask::from_fn(w, h, |_, _| r.random_bool(0.7)),
        2 => {
            let (cx, cy, rad) = (r.random_range(0.0..w as f64), r.random_range(0.0..h as f64), r.random_range(0.0..8.0));
            BinaryMask::from_fn(w, h, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= rad * rad)
        }
        _ => {
            let x0 = r.random_range(0..w);
            let y0 = r.random_range(0..h);
            let x1 = r.random_range(x0..=w);
            let y1 = r.random_range(y0..=h);
            BinaryMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
        }
    }
}

pub fn dice_ref(a: &PixelSet, b: &PixelSet) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64
}

pub fn jaccard_ref(a: &PixelSet, b: &PixelSet) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Set pixels with a 4-neighbour outside the set.
pub fn boundary_ref(a: &PixelSet) -> PixelSet {
    a.iter()
        .copied()
        .filter(|&(x, y)| [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)].iter().any(|p| !a.contains(p)))
        .collect()
}

/// Fraction of `from` within Euclidean distance `tol` of some pixel of `to`.
fn matched(from: &PixelSet, to: &PixelSet, tol: f64) -> f64 {
    let hits = from
        .iter()
        .filter(|&&(x, y)| to.iter().any(|&(u, v)| (((x - u).pow(2) + (y - v).pow(2)) as f64) <= tol * tol))
        .count();
    hits as f64 / from.len() as f64
}

pub fn contour_f_ref(a: &PixelSet, b: &PixelSet, tol: usize) -> f64 {
    let (ba, bb) = (boundary_ref(a), boundary_ref(b));
    if ba.is_empty() && bb.is_empty() {
        return 1.0;
    }
    if ba.is_empty() || bb.is_empty() {
        return 0.0;
    }
    let p = matched(&ba, &bb, tol as f64);
    let r = matched(&bb, &ba, tol as f64);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Undirected k-NN edge set by full sort of all pairwise distances.
pub fn knn_edges_ref(coords: &[[f32; 2]], k: usize) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for (i, a) in coords.iter().enumerate() {
        let mut others: Vec<(f64, usize)> = coords
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, b)| {
                let (dx, dy) = (a[0] as f64 - b[0] as f64, a[1] as f64 - b[1] as f64);
                (dx * dx + dy * dy, j)
            })
            .collect();
        others.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap().then(p.1.cmp(&q.1)));
        for &(_, j) in others.iter().take(k) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    edges
}

/// Greedy max-min selection, recomputing every distance at every step.
pub fn fps_ref(points: &[[f32; 2]], n: usize, start: usize) -> Vec<usize> {
    let d = |a: [f32; 2], b: [f32; 2]| ((a[0] - b[0]) as f64).powi(2) + ((a[1] - b[1]) as f64).powi(2);
    let mut chosen = vec![start];
    while chosen.len() < n {
        let mut best: Option<(f64, usize)> = None;
        for (i, &p) in points.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let nearest = chosen.iter().map(|&c| d(p, points[c])).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(b, _)| nearest > b) {
                best = Some((nearest, i));
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

/// `sqrt((x - mu)^T S^-1 (x - mu))` with the sample covariance regularized
/// by `1e-6 * trace / 2`.
pub fn mahalanobis_ref(points: &[[f64; 2]]) -> Vec<f64> {
    let n = points.len() as f64;
    let mu = points.iter().fold(Vector2::zeros(), |acc, p| acc + Vector2::new(p[0], p[1])) / n;
    let mut s = Matrix2::zeros();
    for p in points {
        let d = Vector2::new(p[0], p[1]) - mu;
        s += d * d.transpose();
    }
    s /= (n - 1.0).max(1.0);
    let eps = 1e-6 * s.trace() / 2.0;
    s += Matrix2::identity() * eps;
    let inv = s.try_inverse().expect("non-degenerate set");
    points
        .iter()
        .map(|p| {
            let d = Vector2::new(p[0], p[1]) - mu;
            (d.transpose() * inv * d)[(0, 0)].max(0.0).sqrt()
        })
        .collect()
}

pub fn random_points(r: &mut impl Rng, n: usize, extent: f32) -> Vec<[f32; 2]> {
    (0..n).map(|_| [r.random_range(0.0..extent), r.random_range(0.0..extent)]).collect()
}

/// A random inference-mode graph with `dim` random features per node.
pub fn random_graph(seed: u64, n: usize, dim: usize, k: usize) -> SceneGraph {
    let mut r = rng(seed);
    let nodes: Vec<EnhancedPoint> = (0..n)
        .map(|_| EnhancedPoint {
            x: r.random_range(0.0..64.0),
            y: r.random_range(0.0..64.0),
            features: (0..dim).map(|_| r.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let cfg = GraphBuildConfig {
        k,
        mode: GraphMode::Inference,
        ..GraphBuildConfig::default()
    };
    build_graph(nodes, (64, 64), dim, &cfg, seed).expect("valid random graph")
}
