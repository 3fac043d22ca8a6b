//! Interest points to weighted k-NN scene graphs.
//!
//! Nodes carry the detector descriptor with sigmoid-squashed logits appended.
//! Edges connect spatial nearest neighbours (Euclidean distance on `(x, y)`,
//! ties broken by lower node index) and are stored once as unordered pairs.
//! Edge weights are Euclidean distances between the enhanced descriptors.

mod augment;
mod io;
mod knn;

use serde::{Deserialize, Serialize};

pub use augment::{augment_graph, augment_graph_indexed, GraphAugmentConfig};
pub use io::{read_graph, write_graph};
pub use knn::{spatial_knn, EXACT_KNN_LIMIT};

use crate::backends::{detect_points, Backends, DetectorConfig, InterestPoint, LogitMap};
use crate::image::Image;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhancedPoint {
    pub x: f32,
    pub y: f32,
    /// Descriptor followed by one sigmoid logit per prompt.
    pub features: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    Inference,
    Training,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphBuildConfig {
    pub k: usize,
    #[serde(default = "default_mode")]
    pub mode: GraphMode,
    /// Candidate pool beyond `k` for training-mode sampling.
    #[serde(default = "default_extra_pool")]
    pub extra_pool: usize,
}

fn default_mode() -> GraphMode {
    GraphMode::Inference
}

fn default_extra_pool() -> usize {
    10
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        Self {
            k: 32,
            mode: GraphMode::Inference,
            extra_pool: 10,
        }
    }
}

impl GraphBuildConfig {
    pub fn with_mode(&self, mode: GraphMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(8..=32).contains(&self.k) {
            return Err(Error::Config(format!("graph k {} outside [8, 32]", self.k)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub seed: u64,
    pub config_hash: String,
    /// Neighbour count actually used after clamping.
    pub k_effective: usize,
    pub warnings: Vec<String>,
}

/// Undirected weighted graph over enhanced interest points.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGraph {
    nodes: Vec<EnhancedPoint>,
    edges: Vec<(u32, u32)>,
    weights: Vec<f32>,
    image_size: (usize, usize),
    descriptor_dim: usize,
    meta: GraphMeta,
}

fn feature_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt()
}

impl SceneGraph {
    /// Builds a graph from explicit edges. Pairs are normalized to `(min, max)`
    /// and deduplicated; weights are recomputed from the node features.
    pub fn from_edges(
        nodes: Vec<EnhancedPoint>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        image_size: (usize, usize),
        descriptor_dim: usize,
        meta: GraphMeta,
    ) -> Result<Self> {
        let dim = nodes.first().map(|n| n.features.len()).unwrap_or(descriptor_dim);
        if nodes.iter().any(|n| n.features.len() != dim) {
            return Err(Error::DimensionMismatch("nodes disagree on feature length".into()));
        }
        if dim < descriptor_dim {
            return Err(Error::DimensionMismatch(format!(
                "feature length {dim} shorter than descriptor dimension {descriptor_dim}"
            )));
        }
        let n = nodes.len();
        let mut pairs = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!("edge ({u}, {v}) references a missing node")));
            }
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at node {u}")));
            }
            pairs.push((u.min(v) as u32, u.max(v) as u32));
        }
        pairs.sort_unstable();
        pairs.dedup();
        let weights = pairs
            .iter()
            .map(|&(u, v)| feature_distance(&nodes[u as usize].features, &nodes[v as usize].features))
            .collect();
        Ok(Self {
            nodes,
            edges: pairs,
            weights,
            image_size,
            descriptor_dim,
            meta,
        })
    }

    pub fn nodes(&self) -> &[EnhancedPoint] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Unordered pairs `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f32> {
        let key = (u.min(v) as u32, u.max(v) as u32);
        self.edges.binary_search(&key).ok().map(|i| self.weights[i])
    }

    pub fn image_size(&self) -> (usize, usize) {
        self.image_size
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.nodes.first().map(|n| n.features.len()).unwrap_or(self.descriptor_dim)
    }

    /// Number of appended logit features.
    pub fn logit_dim(&self) -> usize {
        self.feature_dim() - self.descriptor_dim
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        deg
    }

    pub fn coords(&self) -> Vec<[f32; 2]> {
        self.nodes.iter().map(|n| [n.x, n.y]).collect()
    }

    /// Same graph with nodes reordered so that new node `i` is old node
    /// `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.nodes.len();
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::InvalidInput("not a permutation".into()));
            }
            inverse[old] = new;
        }
        if order.len() != n {
            return Err(Error::InvalidInput("not a permutation".into()));
        }
        let nodes = order.iter().map(|&o| self.nodes[o].clone()).collect();
        let edges = self
            .edges
            .iter()
            .map(|&(u, v)| (inverse[u as usize], inverse[v as usize]));
        Self::from_edges(nodes, edges, self.image_size, self.descriptor_dim, self.meta.clone())
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Appends `sigmoid(L(x, y))` for every logit map to every point's descriptor,
/// reading the nearest pixel (rounded, clamped to bounds).
pub fn enhance_points(
    points: &[InterestPoint],
    logit_maps: &[LogitMap],
    image_size: (usize, usize),
) -> Result<Vec<EnhancedPoint>> {
    for map in logit_maps {
        if map.size() != image_size {
            return Err(Error::DimensionMismatch(format!(
                "logit map for `{}` is {}x{}, image is {}x{}",
                map.prompt(),
                map.width(),
                map.height(),
                image_size.0,
                image_size.1
            )));
        }
    }
    let (w, h) = image_size;
    Ok(points
        .iter()
        .map(|p| {
            let px = (p.x.round().max(0.0) as usize).min(w - 1);
            let py = (p.y.round().max(0.0) as usize).min(h - 1);
            let mut features = Vec::with_capacity(p.descriptor.len() + logit_maps.len());
            features.extend_from_slice(&p.descriptor);
            features.extend(logit_maps.iter().map(|m| sigmoid(m.get(px, py))));
            EnhancedPoint {
                x: p.x,
                y: p.y,
                features,
            }
        })
        .collect())
}

/// Builds the k-NN scene graph.
///
/// Inference mode links every node to its `k` spatial nearest neighbours.
/// Training mode links every node to `k` neighbours drawn without replacement
/// from its `k + extra_pool` nearest. `k >= n` is clamped to `n - 1`.
pub fn build_graph(
    points: Vec<EnhancedPoint>,
    image_size: (usize, usize),
    descriptor_dim: usize,
    cfg: &GraphBuildConfig,
    seed: u64,
) -> Result<SceneGraph> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateGraph(format!("{n} node(s); at least 2 required")));
    }
    if cfg.k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut warnings = Vec::new();
    let k = if cfg.k >= n {
        let msg = format!("k={} clamped to {} for a {n}-node graph", cfg.k, n - 1);
        log::warn!("{msg}");
        warnings.push(msg);
        n - 1
    } else {
        cfg.k
    };
    let coords: Vec<[f32; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
    let mut edges = Vec::with_capacity(n * k);
    match cfg.mode {
        GraphMode::Inference => {
            for (i, nbrs) in spatial_knn(&coords, k).into_iter().enumerate() {
                edges.extend(nbrs.into_iter().map(|j| (i, j as usize)));
            }
        }
        GraphMode::Training => {
            let pool = (k + cfg.extra_pool).min(n - 1);
            for (i, nbrs) in spatial_knn(&coords, pool).into_iter().enumerate() {
                let mut r = rng::stream(seed, "graph-sample", &[i as u64]);
                let picks = rand::seq::index::sample(&mut r, nbrs.len(), k);
                edges.extend(picks.into_iter().map(|p| (i, nbrs[p] as usize)));
            }
        }
    }
    let meta = GraphMeta {
        seed,
        config_hash: crate::harness::config_hash(cfg),
        k_effective: k,
        warnings,
    };
    SceneGraph::from_edges(points, edges, image_size, descriptor_dim, meta)
}

/// Detector settings, text prompts and graph settings bundled with the
/// backends that turn an image into a [`SceneGraph`].
#[derive(Clone, Debug)]
pub struct GraphPipeline {
    pub backends: Backends,
    pub detector: DetectorConfig,
    /// One logit map is appended per prompt, in order.
    pub prompts: Vec<String>,
    pub graph: GraphBuildConfig,
}

impl GraphPipeline {
    /// Length of the enhanced descriptor, `D + T`.
    pub fn input_dim(&self) -> usize {
        self.backends.detector.descriptor_dim() + self.prompts.len()
    }

    pub fn enhanced_points(&self, image: &Image, seed: u64) -> Result<Vec<EnhancedPoint>> {
        let points = detect_points(self.backends.detector.as_ref(), image, &self.detector, seed)?;
        let maps = self
            .prompts
            .iter()
            .map(|p| self.backends.logits.logit_map(image, p))
            .collect::<Result<Vec<_>>>()?;
        enhance_points(&points, &maps, image.size())
    }

    pub fn build(&self, image: &Image, mode: GraphMode, seed: u64) -> Result<SceneGraph> {
        let points = self.enhanced_points(image, seed)?;
        build_graph(
            points,
            image.size(),
            self.backends.detector.descriptor_dim(),
            &self.graph.with_mode(mode),
            seed,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f32, y: f32, features: Vec<f32>) -> EnhancedPoint {
        EnhancedPoint { x, y, features }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((1.0 - sigmoid(10.0)).abs() < 1e-4);
    }

    #[test]
    fn enhancement_appends_one_value_per_map() {
        let points = vec![InterestPoint {
            x: 3.4,
            y: 5.6,
            descriptor: vec![0.0; 256],
            confidence: 1.0,
        }];
        let mut values = vec![0.0; 40 * 40];
        values[6 * 40 + 3] = 10.0;
        let map = LogitMap::new(40, 40, values, "p").unwrap();
        let zero = LogitMap::new(40, 40, vec![0.0; 1600], "q").unwrap();
        let e = enhance_points(&points, &[map, zero], (40, 40)).unwrap();
        assert_eq!(e[0].features.len(), 258);
        assert!((e[0].features[256] - 1.0).abs() < 1e-4);
        assert_eq!(e[0].features[257], 0.5);
        let one = enhance_points(&points, &[LogitMap::new(40, 40, vec![0.0; 1600], "q").unwrap()], (40, 40)).unwrap();
        assert_eq!(one[0].features.len(), 257);
    }

    #[test]
    fn enhancement_rejects_mismatched_maps() {
        let map = LogitMap::new(40, 41, vec![0.0; 40 * 41], "p").unwrap();
        assert!(matches!(
            enhance_points(&[], &[map], (40, 40)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn collinear_k1_graph() {
        let pts = vec![pt(0.0, 0.0, vec![0.0]), pt(1.0, 0.0, vec![0.0]), pt(3.0, 0.0, vec![0.0])];
        let cfg = GraphBuildConfig {
            k: 1,
            ..GraphBuildConfig::default()
        };
        let g = build_graph(pts, (32, 32), 1, &cfg, 0).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
    }

    #[test]
    fn weight_is_descriptor_distance() {
        let pts = vec![pt(0.0, 0.0, vec![0.0, 0.0, 0.0]), pt(9.0, 9.0, vec![3.0, 4.0, 0.0])];
        let cfg = GraphBuildConfig {
            k: 1,
            ..GraphBuildConfig::default()
        };
        let g = build_graph(pts, (32, 32), 3, &cfg, 0).unwrap();
        assert_eq!(g.weight(0, 1), Some(5.0));
        assert_eq!(g.weight(1, 0), Some(5.0));
    }

    #[test]
    fn degenerate_and_clamped() {
        let cfg = GraphBuildConfig::default();
        assert!(matches!(
            build_graph(vec![pt(0.0, 0.0, vec![])], (32, 32), 0, &cfg, 0),
            Err(Error::DegenerateGraph(_))
        ));
        let pts = (0..5).map(|i| pt(i as f32, 0.0, vec![1.0])).collect();
        let g = build_graph(pts, (32, 32), 1, &cfg, 0).unwrap();
        assert_eq!(g.meta().k_effective, 4);
        assert_eq!(g.meta().warnings.len(), 1);
        assert_eq!(g.edges().len(), 10);
    }

    #[test]
    fn training_graphs_are_seeded() {
        let pts: Vec<_> = (0..60)
            .map(|i| pt((i * 7 % 31) as f32, (i * 13 % 29) as f32, vec![i as f32]))
            .collect();
        let cfg = GraphBuildConfig {
            k: 4,
            mode: GraphMode::Training,
            extra_pool: 10,
        };
        let a = build_graph(pts.clone(), (32, 32), 1, &cfg, 3).unwrap();
        let b = build_graph(pts.clone(), (32, 32), 1, &cfg, 3).unwrap();
        let c = build_graph(pts, (32, 32), 1, &cfg, 4).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn permutation_relabels_edges() {
        let pts = vec![pt(0.0, 0.0, vec![0.0]), pt(1.0, 0.0, vec![1.0]), pt(3.0, 0.0, vec![3.0])];
        let cfg = GraphBuildConfig {
            k: 1,
            ..GraphBuildConfig::default()
        };
        let g = build_graph(pts, (32, 32), 1, &cfg, 0).unwrap();
        let p = g.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.nodes()[0].x, 3.0);
        assert_eq!(p.edges(), &[(0, 2), (1, 2)]);
    }
}
