use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EnhancedPoint, SceneGraph};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphAugmentConfig {
    pub edge_drop_prob: f64,
    pub node_drop_prob: f64,
    /// Gaussian noise on node coordinates, in pixels.
    pub coord_noise_sigma: f32,
    /// Gaussian noise on node features.
    pub feature_noise_sigma: f32,
}

impl Default for GraphAugmentConfig {
    fn default() -> Self {
        Self {
            edge_drop_prob: 0.2,
            node_drop_prob: 0.05,
            coord_noise_sigma: 2.0,
            feature_noise_sigma: 0.01,
        }
    }
}

impl GraphAugmentConfig {
    pub fn identity() -> Self {
        Self {
            edge_drop_prob: 0.0,
            node_drop_prob: 0.0,
            coord_noise_sigma: 0.0,
            feature_noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("edge_drop_prob", self.edge_drop_prob), ("node_drop_prob", self.node_drop_prob)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0, 1)")));
            }
        }
        if self.coord_noise_sigma < 0.0 || self.feature_noise_sigma < 0.0 {
            return Err(Error::Config("augmentation sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

/// Randomly drops edges and nodes and jitters coordinates and features.
pub fn augment_graph(graph: &SceneGraph, cfg: &GraphAugmentConfig, seed: u64) -> SceneGraph {
    augment_graph_indexed(graph, cfg, seed).0
}

/// Like [`augment_graph`], also returning for every output node the index of
/// the input node it came from.
///
/// If dropping would leave fewer than two nodes the draw is repeated with the
/// node drop probability halved, up to three times, after which the input is
/// returned unchanged. A node drop probability of 1 or more can never succeed
/// and returns the input directly.
pub fn augment_graph_indexed(
    graph: &SceneGraph,
    cfg: &GraphAugmentConfig,
    seed: u64,
) -> (SceneGraph, Vec<usize>) {
    let n = graph.node_count();
    let unchanged = || (graph.clone(), (0..n).collect());
    if n < 2 || cfg.node_drop_prob >= 1.0 {
        return unchanged();
    }
    let mut node_drop = cfg.node_drop_prob.max(0.0);
    for attempt in 0..4u64 {
        let mut r = rng::stream(seed, "graph-augment", &[attempt]);
        let kept: Vec<usize> = (0..n).filter(|_| !r.random_bool(node_drop)).collect();
        if kept.len() >= 2 {
            return (apply(graph, cfg, &kept, &mut r), kept);
        }
        node_drop *= 0.5;
    }
    log::warn!("graph augmentation left fewer than two nodes after retries; using input graph");
    unchanged()
}

fn apply(graph: &SceneGraph, cfg: &GraphAugmentConfig, kept: &[usize], r: &mut rng::Rng) -> SceneGraph {
    let n = graph.node_count();
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let edge_drop = cfg.edge_drop_prob.clamp(0.0, 1.0);
    let edges: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .filter(|_| !r.random_bool(edge_drop))
        .filter_map(|&(u, v)| {
            let (a, b) = (remap[u as usize], remap[v as usize]);
            (a != usize::MAX && b != usize::MAX).then_some((a, b))
        })
        .collect();

    let (w, h) = graph.image_size();
    let descriptor_dim = graph.descriptor_dim();
    let coord_noise = Normal::new(0.0f32, cfg.coord_noise_sigma.max(0.0)).expect("sigma is finite");
    let feature_noise = Normal::new(0.0f32, cfg.feature_noise_sigma.max(0.0)).expect("sigma is finite");
    let nodes: Vec<EnhancedPoint> = kept
        .iter()
        .map(|&i| {
            let src = &graph.nodes()[i];
            let mut node = src.clone();
            if cfg.coord_noise_sigma > 0.0 {
                node.x = (node.x + coord_noise.sample(r)).clamp(0.0, w as f32 - 1e-3);
                node.y = (node.y + coord_noise.sample(r)).clamp(0.0, h as f32 - 1e-3);
            }
            if cfg.feature_noise_sigma > 0.0 {
                for (j, f) in node.features.iter_mut().enumerate() {
                    *f += feature_noise.sample(r);
                    if j >= descriptor_dim {
                        *f = f.clamp(0.0, 1.0);
                    }
                }
            }
            node
        })
        .collect();

    SceneGraph::from_edges(nodes, edges, graph.image_size(), descriptor_dim, graph.meta().clone())
        .expect("augmentation preserves graph validity")
}
