//! Isolation forest over 2-D points.

use rand::seq::index::sample;
use rand::Rng;

use crate::rng;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average path length of an unsuccessful BST search over `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

enum Node {
    Leaf { size: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn grow(points: &[[f64; 2]], idx: &mut [usize], depth: usize, limit: usize, r: &mut rng::Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf { size: idx.len() });
        if depth >= limit || idx.len() <= 1 {
            return id;
        }
        let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 2];
        for &i in idx.iter() {
            for a in 0..2 {
                ranges[a].0 = ranges[a].0.min(points[i][a]);
                ranges[a].1 = ranges[a].1.max(points[i][a]);
            }
        }
        let spread: Vec<usize> = (0..2).filter(|&a| ranges[a].1 > ranges[a].0).collect();
        if spread.is_empty() {
            return id;
        }
        let axis = spread[r.random_range(0..spread.len())];
        let (lo, hi) = ranges[axis];
        let value = r.random_range(lo..hi);
        let mut split = 0;
        for k in 0..idx.len() {
            if points[idx[k]][axis] < value {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, rr) = idx.split_at_mut(split);
        let left = Self::grow(points, l, depth + 1, limit, r, nodes);
        let right = Self::grow(points, rr, depth + 1, limit, r, nodes);
        nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn path_length(&self, p: [f64; 2]) -> f64 {
        let mut id = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[id] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split { axis, value, left, right } => {
                    id = if p[axis] < value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

pub struct IsolationForest {
    trees: Vec<Tree>,
    sample_size: usize,
}

impl IsolationForest {
    /// `n_trees` trees, each grown on a subsample of `min(max_samples, n)`
    /// points to depth `ceil(log2(subsample))`.
    pub fn fit(points: &[[f64; 2]], n_trees: usize, max_samples: usize, seed: u64) -> Self {
        let psi = max_samples.min(points.len()).max(1);
        let limit = (psi as f64).log2().ceil().max(0.0) as usize;
        let trees = (0..n_trees)
            .map(|t| {
                let mut r = rng::stream(seed, "isolation-tree", &[t as u64]);
                let mut idx = sample(&mut r, points.len(), psi).into_vec();
                let mut nodes = Vec::new();
                Tree::grow(points, &mut idx, 0, limit, &mut r, &mut nodes);
                Tree { nodes }
            })
            .collect();
        Self { trees, sample_size: psi }
    }

    /// Anomaly score `2^(-E[h(x)] / c(psi))` in (0, 1]; higher is more
    /// anomalous.
    pub fn score(&self, p: [f64; 2]) -> f64 {
        let mean = self.trees.iter().map(|t| t.path_length(p)).sum::<f64>() / self.trees.len() as f64;
        let c = average_path_length(self.sample_size);
        if c == 0.0 {
            return 0.5;
        }
        2f64.powf(-mean / c)
    }
}

/// Linear-interpolated quantile of `values` at `q` in [0, 1].
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Indices of points the forest does not flag: a point is anomalous when its
/// score exceeds the `1 - contamination` quantile of all scores.
pub fn isolation_inliers(points: &[[f64; 2]], n_trees: usize, max_samples: usize, contamination: f64, seed: u64) -> Vec<usize> {
    let forest = IsolationForest::fit(points, n_trees, max_samples, seed);
    let scores: Vec<f64> = points.iter().map(|&p| forest.score(p)).collect();
    let cut = quantile(&scores, 1.0 - contamination);
    (0..points.len()).filter(|&i| scores[i] <= cut).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_length_constants() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        // c(256) from the original isolation forest formulation.
        assert!((average_path_length(256) - 10.2448).abs() < 1e-3);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5), 2.5);
        assert_eq!(quantile(&[1.0, 2.0], 1.0), 2.0);
    }

    #[test]
    fn far_point_scores_highest() {
        let mut pts: Vec<[f64; 2]> = (0..40).map(|i| [(i % 7) as f64, (i / 7) as f64]).collect();
        pts.push([500.0, 500.0]);
        let forest = IsolationForest::fit(&pts, 100, 64, 1);
        let far = forest.score([500.0, 500.0]);
        assert!(pts[..40].iter().all(|&p| forest.score(p) < far));
    }
}
