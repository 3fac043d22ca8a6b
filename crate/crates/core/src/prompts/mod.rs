//! Classified graph nodes to segmenter prompts.
//!
//! Nodes are grouped by predicted class, stray nodes are removed with an
//! isolation forest and a normalized Mahalanobis threshold, and each surviving
//! set yields a tight box and a farthest-point-sampled subset of points.

mod forest;
mod fps;
mod mahalanobis;

use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

pub use forest::{average_path_length, isolation_inliers, quantile, IsolationForest};
pub use fps::{farthest_point_sampling, FpsStart};
pub use mahalanobis::{inverse_2x2, mahalanobis_distances, mahalanobis_inliers, mean_and_covariance, normalized_mahalanobis};

use crate::backends::{BoxPrompt, ClassPrompt};
use crate::classifier::NodeProbabilities;
use crate::error::{Error, Result};
use crate::graph::SceneGraph;
use crate::rng;

/// Sets smaller than this skip the isolation forest.
pub const FOREST_MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    ForestFiltered,
    MahalanobisFiltered,
}

/// Points assigned to one class at one filtering stage, with the graph node
/// each came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPointSet {
    pub class_id: usize,
    pub stage: Stage,
    pub points: Vec<[f32; 2]>,
    pub nodes: Vec<usize>,
}

impl ClassPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn subset(&self, keep: &[usize], stage: Stage) -> Self {
        Self {
            class_id: self.class_id,
            stage,
            points: keep.iter().map(|&i| self.points[i]).collect(),
            nodes: keep.iter().map(|&i| self.nodes[i]).collect(),
        }
    }

    fn as_f64(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| [p[0] as f64, p[1] as f64]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptType {
    #[serde(rename = "P")]
    Point,
    #[serde(rename = "B")]
    Box,
    #[serde(rename = "PB")]
    PointAndBox,
}

impl PromptType {
    pub const ALL: [PromptType; 3] = [PromptType::Point, PromptType::Box, PromptType::PointAndBox];

    pub fn uses_points(self) -> bool {
        matches!(self, PromptType::Point | PromptType::PointAndBox)
    }

    pub fn uses_box(self) -> bool {
        matches!(self, PromptType::Box | PromptType::PointAndBox)
    }
}

impl std::fmt::Display for PromptType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PromptType::Point => "P",
            PromptType::Box => "B",
            PromptType::PointAndBox => "PB",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    pub prompt_type: PromptType,
    /// Normalized Mahalanobis cut for the point survivor set.
    pub point_threshold: f64,
    /// Normalized Mahalanobis cut for the box survivor set.
    pub box_threshold: f64,
    /// Points sampled per class.
    pub point_samples: usize,
    #[serde(default = "default_background")]
    pub background_class: Option<usize>,
    #[serde(default = "default_contamination")]
    pub contamination: f64,
    #[serde(default = "default_trees")]
    pub forest_trees: usize,
    /// Use the point survivor set for the box as well.
    #[serde(default)]
    pub single_survivor_set: bool,
    /// Start sampling from the point nearest the centroid instead of a seeded
    /// draw.
    #[serde(default)]
    pub deterministic_start: bool,
    /// Add other classes' sampled points as background points.
    #[serde(default)]
    pub negative_points: bool,
}

fn default_background() -> Option<usize> {
    Some(0)
}

fn default_contamination() -> f64 {
    0.1
}

fn default_trees() -> usize {
    100
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            prompt_type: PromptType::PointAndBox,
            point_threshold: 1.0,
            box_threshold: 0.8,
            point_samples: 20,
            background_class: Some(0),
            contamination: 0.1,
            forest_trees: 100,
            single_survivor_set: false,
            deterministic_start: false,
            negative_points: false,
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("point_threshold", self.point_threshold), ("box_threshold", self.box_threshold)] {
            if !(0.6..=1.0).contains(&t) {
                return Err(Error::Config(format!("{name} {t} outside [0.6, 1.0]")));
            }
        }
        if !(5..=20).contains(&self.point_samples) {
            return Err(Error::Config(format!("point_samples {} outside [5, 20]", self.point_samples)));
        }
        self.validate_structure()
    }

    pub fn validate_structure(&self) -> Result<()> {
        if !(self.point_threshold > 0.0 && self.point_threshold <= 1.0)
            || !(self.box_threshold > 0.0 && self.box_threshold <= 1.0)
        {
            return Err(Error::Config("Mahalanobis thresholds must lie in (0, 1]".into()));
        }
        if self.point_samples == 0 {
            return Err(Error::Config("point_samples must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.contamination) {
            return Err(Error::Config("contamination must lie in [0, 0.5)".into()));
        }
        if self.forest_trees == 0 {
            return Err(Error::Config("forest_trees must be positive".into()));
        }
        Ok(())
    }
}

/// Partition of the nodes by argmax class (lowest class on ties). One set
/// per class, possibly empty.
pub fn group_by_class(probs: &NodeProbabilities, graph: &SceneGraph) -> Result<Vec<ClassPointSet>> {
    if probs.node_count() != graph.node_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} distributions for {} nodes",
            probs.node_count(),
            graph.node_count()
        )));
    }
    let mut sets: Vec<ClassPointSet> = (0..probs.num_classes())
        .map(|c| ClassPointSet {
            class_id: c,
            stage: Stage::Raw,
            points: Vec::new(),
            nodes: Vec::new(),
        })
        .collect();
    for (i, (c, node)) in probs.labels().into_iter().zip(graph.nodes()).enumerate() {
        sets[c].points.push([node.x, node.y]);
        sets[c].nodes.push(i);
    }
    Ok(sets)
}

/// Drops points the isolation forest flags as anomalous. Sets with fewer than
/// [`FOREST_MIN_POINTS`] points pass through.
pub fn filter_isolation_forest(set: &ClassPointSet, contamination: f64, trees: usize, seed: u64) -> ClassPointSet {
    if set.len() < FOREST_MIN_POINTS {
        return set.subset(&(0..set.len()).collect::<Vec<_>>(), Stage::ForestFiltered);
    }
    let keep = isolation_inliers(
        &set.as_f64(),
        trees,
        64,
        contamination,
        rng::derive_str(seed, "forest", &[set.class_id as u64]),
    );
    set.subset(&keep, Stage::ForestFiltered)
}

/// Drops points whose normalized Mahalanobis distance exceeds `threshold`.
pub fn filter_mahalanobis(set: &ClassPointSet, threshold: f64) -> ClassPointSet {
    set.subset(&mahalanobis_inliers(&set.as_f64(), threshold), Stage::MahalanobisFiltered)
}

/// Tight axis-aligned box, `None` for an empty set.
pub fn build_box(points: &[[f32; 2]]) -> Option<BoxPrompt> {
    let first = points.first()?;
    let mut b = BoxPrompt {
        x_min: first[0],
        y_min: first[1],
        x_max: first[0],
        y_max: first[1],
    };
    for p in points {
        b.x_min = b.x_min.min(p[0]);
        b.y_min = b.y_min.min(p[1]);
        b.x_max = b.x_max.max(p[0]);
        b.y_max = b.y_max.max(p[1]);
    }
    Some(b)
}

pub fn sample_points_fps(points: &[[f32; 2]], n: usize, start: FpsStart) -> Vec<[f32; 2]> {
    farthest_point_sampling(points, n, start)
        .into_iter()
        .map(|i| points[i])
        .collect()
}

/// Filtering trace of one class, for debugging dumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTrace {
    pub class_id: usize,
    pub raw: usize,
    pub forest: usize,
    pub point_survivors: usize,
    pub box_survivors: usize,
}

/// Prompts for one image (batch size 1).
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSet {
    /// `[1, C, SPS, 2]`; rows past `point_counts[c]` are zero padding.
    pub points: Array4<f32>,
    /// `[1, C, 4]` as `(x_min, y_min, x_max, y_max)`; zero for absent classes.
    pub boxes: Array3<f32>,
    pub point_counts: Vec<usize>,
    pub has_box: Vec<bool>,
    pub class_presence: Vec<bool>,
    pub config: PromptConfig,
    pub trace: Vec<ClassTrace>,
}

impl PromptSet {
    pub fn num_classes(&self) -> usize {
        self.class_presence.len()
    }

    pub fn class_points(&self, c: usize) -> Vec<[f32; 2]> {
        (0..self.point_counts[c])
            .map(|k| [self.points[[0, c, k, 0]], self.points[[0, c, k, 1]]])
            .collect()
    }

    pub fn class_box(&self, c: usize) -> Option<BoxPrompt> {
        self.has_box[c].then(|| BoxPrompt {
            x_min: self.boxes[[0, c, 0]],
            y_min: self.boxes[[0, c, 1]],
            x_max: self.boxes[[0, c, 2]],
            y_max: self.boxes[[0, c, 3]],
        })
    }

    /// Segmenter input for every present class, restricted to the prompt
    /// components the configured prompt type uses.
    pub fn class_prompts(&self) -> Vec<ClassPrompt> {
        let kind = self.config.prompt_type;
        (0..self.num_classes())
            .filter(|&c| self.class_presence[c])
            .map(|c| {
                let mut points = Vec::new();
                let mut labels = Vec::new();
                if kind.uses_points() {
                    points = self.class_points(c);
                    labels = vec![true; points.len()];
                    if self.config.negative_points {
                        for other in (0..self.num_classes()).filter(|&o| o != c && self.class_presence[o]) {
                            let neg = self.class_points(other);
                            labels.extend(std::iter::repeat_n(false, neg.len()));
                            points.extend(neg);
                        }
                    }
                }
                ClassPrompt {
                    class_id: c,
                    points,
                    labels,
                    bbox: if kind.uses_box() { self.class_box(c) } else { None },
                }
            })
            .collect()
    }

    /// Structured record for `--dump-prompts`.
    pub fn to_json(&self) -> serde_json::Value {
        let classes: Vec<serde_json::Value> = (0..self.num_classes())
            .map(|c| {
                serde_json::json!({
                    "class_id": c,
                    "present": self.class_presence[c],
                    "points": self.class_points(c),
                    "box": self.class_box(c).map(|b| [b.x_min, b.y_min, b.x_max, b.y_max]),
                    "trace": self.trace[c],
                })
            })
            .collect();
        serde_json::json!({
            "shape_points": self.points.shape(),
            "shape_boxes": self.boxes.shape(),
            "config": self.config,
            "classes": classes,
        })
    }
}

/// Grouping, forest filter, two Mahalanobis passes (points at PT, box at BT)
/// and farthest point sampling, composed.
pub fn build_prompts(
    probs: &NodeProbabilities,
    graph: &SceneGraph,
    cfg: &PromptConfig,
    seed: u64,
) -> Result<PromptSet> {
    cfg.validate_structure()?;
    let sets = group_by_class(probs, graph)?;
    let c_count = sets.len();
    let p = cfg.point_samples;
    let mut points = Array4::<f32>::zeros((1, c_count, p, 2));
    let mut boxes = Array3::<f32>::zeros((1, c_count, 4));
    let mut point_counts = vec![0; c_count];
    let mut has_box = vec![false; c_count];
    let mut presence = vec![false; c_count];
    let mut trace = Vec::with_capacity(c_count);
    for set in &sets {
        let c = set.class_id;
        let forest = filter_isolation_forest(set, cfg.contamination, cfg.forest_trees, seed);
        let for_points = filter_mahalanobis(&forest, cfg.point_threshold);
        let for_box = if cfg.single_survivor_set {
            for_points.clone()
        } else {
            filter_mahalanobis(&forest, cfg.box_threshold)
        };
        trace.push(ClassTrace {
            class_id: c,
            raw: set.len(),
            forest: forest.len(),
            point_survivors: for_points.len(),
            box_survivors: for_box.len(),
        });
        if Some(c) == cfg.background_class {
            continue;
        }
        let start = if cfg.deterministic_start {
            FpsStart::Centroid
        } else {
            FpsStart::Seeded(rng::derive_str(seed, "fps", &[c as u64]))
        };
        let chosen = sample_points_fps(&for_points.points, p, start);
        for (k, q) in chosen.iter().enumerate() {
            points[[0, c, k, 0]] = q[0];
            points[[0, c, k, 1]] = q[1];
        }
        point_counts[c] = chosen.len();
        if let Some(b) = build_box(&for_box.points) {
            boxes[[0, c, 0]] = b.x_min;
            boxes[[0, c, 1]] = b.y_min;
            boxes[[0, c, 2]] = b.x_max;
            boxes[[0, c, 3]] = b.y_max;
            has_box[c] = true;
        }
        presence[c] = match cfg.prompt_type {
            PromptType::Point => point_counts[c] > 0,
            PromptType::Box => has_box[c],
            PromptType::PointAndBox => point_counts[c] > 0 || has_box[c],
        };
    }
    if !presence.iter().any(|&x| x) {
        return Err(Error::EmptyPrompt(
            "no class other than background received any nodes".into(),
        ));
    }
    Ok(PromptSet {
        points,
        boxes,
        point_counts,
        has_box,
        class_presence: presence,
        config: cfg.clone(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EnhancedPoint, GraphMeta};
    use ndarray::Array2;

    fn graph_of(points: &[[f32; 2]]) -> SceneGraph {
        let nodes = points
            .iter()
            .map(|p| EnhancedPoint {
                x: p[0],
                y: p[1],
                features: vec![0.0],
            })
            .collect();
        SceneGraph::from_edges(nodes, [], (2000, 2000), 1, GraphMeta::default()).unwrap()
    }

    fn probs(rows: &[&[f32]]) -> NodeProbabilities {
        let c = rows[0].len();
        let flat: Vec<f32> = rows.iter().flat_map(|r| r.iter().map(|v| v.ln())).collect();
        NodeProbabilities::from_log_probs(&Array2::from_shape_vec((rows.len(), c), flat).unwrap())
    }

    #[test]
    fn grouping_uses_argmax_with_low_ties() {
        let g = graph_of(&[[0.0, 0.0], [1.0, 1.0]]);
        let p = probs(&[&[0.2, 0.8], &[0.5, 0.5]]);
        let sets = group_by_class(&p, &g).unwrap();
        assert_eq!(sets[0].nodes, vec![1]);
        assert_eq!(sets[1].nodes, vec![0]);
    }

    #[test]
    fn boxes_are_tight() {
        let b = build_box(&[[2.0, 3.0], [5.0, 1.0], [4.0, 7.0]]).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (2.0, 1.0, 5.0, 7.0));
        let b = build_box(&[[4.0, 7.0], [2.0, 3.0], [5.0, 1.0]]).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (2.0, 1.0, 5.0, 7.0));
        let single = build_box(&[[4.0, 4.0]]).unwrap();
        assert_eq!((single.x_min, single.x_max), (4.0, 4.0));
        assert!(build_box(&[]).is_none());
    }

    #[test]
    fn small_sets_skip_forest() {
        let set = ClassPointSet {
            class_id: 1,
            stage: Stage::Raw,
            points: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [500.0, 500.0], [1.0, 1.0]],
            nodes: (0..5).collect(),
        };
        let out = filter_isolation_forest(&set, 0.1, 100, 0);
        assert_eq!(out.points, set.points);
        assert_eq!(out.stage, Stage::ForestFiltered);
    }

    #[test]
    fn duplicated_points_survive_forest() {
        let set = ClassPointSet {
            class_id: 1,
            stage: Stage::Raw,
            points: vec![[3.0, 3.0]; 40],
            nodes: (0..40).collect(),
        };
        assert!(filter_isolation_forest(&set, 0.1, 100, 4).len() >= 36);
    }

    #[test]
    fn prompt_shapes_and_presence() {
        let pts: Vec<[f32; 2]> = (0..30).map(|i| [(i % 6) as f32 * 3.0, (i / 6) as f32 * 3.0]).collect();
        let g = graph_of(&pts);
        let rows: Vec<Vec<f32>> = (0..30)
            .map(|i| if i < 10 { vec![0.8, 0.1, 0.1] } else { vec![0.1, 0.8, 0.1] })
            .collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let cfg = PromptConfig {
            point_samples: 5,
            ..PromptConfig::default()
        };
        let set = build_prompts(&probs(&refs), &g, &cfg, 1).unwrap();
        assert_eq!(set.points.shape(), &[1, 3, 5, 2]);
        assert_eq!(set.boxes.shape(), &[1, 3, 4]);
        assert_eq!(set.class_presence, vec![false, true, false]);
        assert_eq!(set.point_counts[1], 5);
        let prompts = set.class_prompts();
        assert_eq!(prompts.len(), 1);
        assert!(prompts[0].bbox.is_some());
        // Sampled points are graph nodes of the class.
        for q in set.class_points(1) {
            assert!(pts[10..].contains(&q));
        }
        assert_eq!(set, build_prompts(&probs(&refs), &g, &cfg, 1).unwrap());
    }

    #[test]
    fn all_background_is_empty_prompt() {
        let g = graph_of(&[[0.0, 0.0], [1.0, 1.0]]);
        let p = probs(&[&[0.9, 0.1], &[0.6, 0.4]]);
        assert!(matches!(
            build_prompts(&p, &g, &PromptConfig::default(), 0),
            Err(Error::EmptyPrompt(_))
        ));
    }

    #[test]
    fn prompt_type_controls_components() {
        let pts: Vec<[f32; 2]> = (0..12).map(|i| [i as f32, (i * i % 7) as f32]).collect();
        let g = graph_of(&pts);
        let rows: Vec<Vec<f32>> = (0..12).map(|_| vec![0.1, 0.9]).collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        for kind in PromptType::ALL {
            let cfg = PromptConfig {
                prompt_type: kind,
                point_samples: 5,
                ..PromptConfig::default()
            };
            let cp = build_prompts(&probs(&refs), &g, &cfg, 0).unwrap().class_prompts();
            assert_eq!(cp[0].bbox.is_some(), kind.uses_box());
            assert_eq!(!cp[0].points.is_empty(), kind.uses_points());
        }
    }
}
