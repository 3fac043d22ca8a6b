//! Graph-convolution node classifier and its few-shot training loop.
//!
//! The network is three blocks of `edge dropout -> graph conv -> ReLU ->
//! feature dropout` at width `hidden_dim`, followed by a perceptron
//! `hidden_dim -> integration_dim -> ReLU -> num_classes` and a log-softmax.
//! Gradients are computed by hand; see [`layers`].

mod augment;
mod checkpoint;
pub mod layers;
mod labels;
mod optim;
mod train;

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use augment::augment_image;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use labels::{class_weights, extract_labels, node_f1, Located};
pub use layers::ModelType;
pub use optim::{Adam, StepLr};
pub use train::{epochs_for_classes, train_few_shot, TrainConfig, TrainingReport};

use crate::error::{Error, Result};
use crate::graph::SceneGraph;
use crate::rng;
use layers::{Adjacency, Conv, ConvCache, Linear, Param};

pub const NUM_BLOCKS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub model_type: ModelType,
    pub hidden_dim: usize,
    pub integration_dim: usize,
    /// Feature dropout after every block.
    pub dropout: f64,
    /// Edge dropout before every block.
    pub edge_dropout: f64,
    pub num_classes: usize,
    /// Enhanced descriptor length `D + T`.
    pub input_dim: usize,
}

impl ClassifierConfig {
    /// Structural checks plus the tuning ranges for widths and dropouts.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        let checks = [
            ("hidden_dim", (256..=1024).contains(&self.hidden_dim), "[256, 1024]"),
            ("integration_dim", (128..=512).contains(&self.integration_dim), "[128, 512]"),
            ("dropout", (0.1..=0.3).contains(&self.dropout), "[0.1, 0.3]"),
            ("edge_dropout", (0.3..=0.8).contains(&self.edge_dropout), "[0.3, 0.8]"),
        ];
        for (name, ok, range) in checks {
            if !ok {
                return Err(Error::Config(format!("classifier {name} outside {range}")));
            }
        }
        Ok(())
    }

    /// Only the checks the network needs to be well formed.
    pub fn validate_structure(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.hidden_dim == 0 || self.integration_dim == 0 || self.input_dim == 0 {
            return Err(Error::Config("classifier widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..=1.0).contains(&self.edge_dropout) {
            return Err(Error::Config("dropout probabilities must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    /// No dropout; deterministic.
    Eval,
    /// Edge and feature dropout drawn from `seed`.
    Train { seed: u64 },
}

/// Per-node class distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeProbabilities {
    probs: Array2<f32>,
}

impl NodeProbabilities {
    pub fn from_log_probs(log_probs: &Array2<f32>) -> Self {
        Self {
            probs: log_probs.mapv(f32::exp),
        }
    }

    pub fn node_count(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn matrix(&self) -> &Array2<f32> {
        &self.probs
    }

    pub fn node(&self, i: usize) -> ArrayView1<'_, f32> {
        self.probs.row(i)
    }

    /// Argmax per node, lowest class on ties.
    pub fn labels(&self) -> Vec<usize> {
        self.probs
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (c, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
    /// Input of each block, then the perceptron input.
    inputs: Vec<Array2<f32>>,
    adjacency: Vec<Adjacency>,
    convs: Vec<ConvCache>,
    /// ReLU gate times dropout scale per block.
    gates: Vec<Array2<f32>>,
    hidden_pre: Array2<f32>,
    hidden: Array2<f32>,
    log_probs: Array2<f32>,
}

/// Parameter gradients keyed by parameter name.
pub type NamedGradients = Vec<(String, Array2<f32>)>;

#[derive(Clone, Debug)]
pub struct ClassifierModel {
    config: ClassifierConfig,
    blocks: Vec<Conv>,
    hidden: Linear,
    head: Linear,
}

fn log_softmax_rows(logits: &Array2<f32>) -> Array2<f32> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f32::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f32>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

impl ClassifierModel {
    /// Glorot-initialized network. Only structural validation is applied so
    /// that small networks can be built for experiments; job configs go
    /// through [`ClassifierConfig::validate`].
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate_structure()?;
        let mut r = rng::stream(seed, "classifier-init", &[]);
        let mut blocks = Vec::with_capacity(NUM_BLOCKS);
        for b in 0..NUM_BLOCKS {
            let input = if b == 0 { config.input_dim } else { config.hidden_dim };
            blocks.push(Conv::new(
                config.model_type,
                &format!("block{b}"),
                input,
                config.hidden_dim,
                &mut r,
            ));
        }
        let hidden = Linear::new("mlp.hidden", config.hidden_dim, config.integration_dim, &mut r);
        let head = Linear::new("mlp.head", config.integration_dim, config.num_classes, &mut r);
        Ok(Self {
            config,
            blocks,
            hidden,
            head,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = self.blocks.iter().flat_map(|b| b.params()).collect();
        out.extend(self.hidden.params());
        out.extend(self.head.params());
        out
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = self.blocks.iter_mut().flat_map(|b| b.params_mut()).collect();
        out.extend(self.hidden.params_mut());
        out.extend(self.head.params_mut());
        out
    }

    pub fn param(&self, name: &str) -> Option<&Array2<f32>> {
        self.params().into_iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    fn features(&self, graph: &SceneGraph) -> Result<Array2<f32>> {
        let n = graph.node_count();
        let dim = graph.feature_dim();
        if n > 0 && dim != self.config.input_dim {
            return Err(Error::Config(format!(
                "graph features have length {dim}, classifier expects {}",
                self.config.input_dim
            )));
        }
        let mut x = Array2::<f32>::zeros((n, self.config.input_dim));
        for (mut row, node) in x.rows_mut().into_iter().zip(graph.nodes()) {
            row.as_slice_mut().expect("row-major").copy_from_slice(&node.features);
        }
        Ok(x)
    }

    fn run(&self, graph: &SceneGraph, mode: ForwardMode) -> Result<ForwardCache> {
        let mut h = self.features(graph)?;
        let mut inputs = Vec::with_capacity(NUM_BLOCKS + 1);
        let mut adjacency = Vec::with_capacity(NUM_BLOCKS);
        let mut convs = Vec::with_capacity(NUM_BLOCKS);
        let mut gates = Vec::with_capacity(NUM_BLOCKS);
        for (b, conv) in self.blocks.iter().enumerate() {
            let adj = match mode {
                ForwardMode::Eval => Adjacency::from_graph(graph, None),
                ForwardMode::Train { seed } => {
                    let mut r = rng::stream(seed, "edge-dropout", &[b as u64]);
                    Adjacency::from_graph(graph, Some((self.config.edge_dropout, &mut r)))
                }
            };
            let (y, cache) = conv.forward(&h, &adj);
            let gate = match mode {
                ForwardMode::Train { seed } if self.config.dropout > 0.0 => {
                    let p = self.config.dropout;
                    let scale = 1.0 / (1.0 - p as f32);
                    let mut r = rng::stream(seed, "feature-dropout", &[b as u64]);
                    y.mapv(|v| {
                        let keep = !r.random_bool(p);
                        if v > 0.0 && keep {
                            scale
                        } else {
                            0.0
                        }
                    })
                }
                _ => y.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            };
            let out = &y * &gate;
            inputs.push(std::mem::replace(&mut h, out));
            adjacency.push(adj);
            convs.push(cache);
            gates.push(gate);
        }
        let hidden_pre = self.hidden.forward(h.view());
        let hidden = hidden_pre.mapv(|v| v.max(0.0));
        let logits = self.head.forward(hidden.view());
        inputs.push(h);
        Ok(ForwardCache {
            inputs,
            adjacency,
            convs,
            gates,
            hidden_pre,
            hidden,
            log_probs: log_softmax_rows(&logits),
        })
    }

    /// Log-probabilities, one row per node.
    pub fn log_probs(&self, graph: &SceneGraph, mode: ForwardMode) -> Result<Array2<f32>> {
        Ok(self.run(graph, mode)?.log_probs)
    }

    pub fn forward(&self, graph: &SceneGraph, mode: ForwardMode) -> Result<NodeProbabilities> {
        Ok(NodeProbabilities::from_log_probs(&self.log_probs(graph, mode)?))
    }

    /// Eval-mode activations entering the output layer (`N x integration_dim`).
    pub fn embed(&self, graph: &SceneGraph) -> Result<Array2<f32>> {
        Ok(self.run(graph, ForwardMode::Eval)?.hidden)
    }

    fn backward(&mut self, graph_cache: &ForwardCache, d_logits: &Array2<f32>) {
        let c = graph_cache;
        let d_hidden = self.head.backward(c.hidden.view(), d_logits);
        let d_hidden_pre = d_hidden * &c.hidden_pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let mut dh = self.hidden.backward(c.inputs[NUM_BLOCKS].view(), &d_hidden_pre);
        for b in (0..NUM_BLOCKS).rev() {
            let dy = dh * &c.gates[b];
            dh = self.blocks[b].backward(&c.inputs[b], &c.adjacency[b], &c.convs[b], &dy);
        }
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Weighted NLL `-sum_i w[y_i] lp_i[y_i] / sum_i w[y_i]`, accumulating its
    /// gradient into the parameters. Returns the loss.
    pub(crate) fn accumulate_gradients(
        &mut self,
        graph: &SceneGraph,
        labels: &[usize],
        weights: &[f32],
        mode: ForwardMode,
    ) -> Result<f32> {
        if labels.len() != graph.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                graph.node_count()
            )));
        }
        if weights.len() != self.config.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "{} class weights for {} classes",
                weights.len(),
                self.config.num_classes
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.config.num_classes) {
            return Err(Error::LabelRange(format!(
                "label {bad} with {} classes",
                self.config.num_classes
            )));
        }
        let cache = self.run(graph, mode)?;
        let total: f32 = labels.iter().map(|&y| weights[y]).sum();
        if total <= 0.0 {
            return Err(Error::Training("class weights of the labelled nodes sum to zero".into()));
        }
        let lp = &cache.log_probs;
        let loss = -labels
            .iter()
            .enumerate()
            .map(|(i, &y)| weights[y] * lp[[i, y]])
            .sum::<f32>()
            / total;
        let mut d_logits = lp.mapv(f32::exp);
        for (&y, mut row) in labels.iter().zip(d_logits.axis_iter_mut(Axis(0))) {
            row[y] -= 1.0;
            let s = weights[y] / total;
            row.mapv_inplace(|v| v * s);
        }
        self.backward(&cache, &d_logits);
        Ok(loss)
    }

    /// Loss and gradient of every parameter, by name, for the weighted NLL
    /// objective.
    pub fn loss_and_gradients(
        &self,
        graph: &SceneGraph,
        labels: &[usize],
        weights: &[f32],
        mode: ForwardMode,
    ) -> Result<(f32, NamedGradients)> {
        let mut scratch = self.clone();
        scratch.zero_grad();
        let loss = scratch.accumulate_gradients(graph, labels, weights, mode)?;
        let grads = scratch
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.grad.clone()))
            .collect();
        Ok((loss, grads))
    }

    /// Weighted NLL without gradients.
    pub fn loss(&self, graph: &SceneGraph, labels: &[usize], weights: &[f32], mode: ForwardMode) -> Result<f32> {
        let lp = self.log_probs(graph, mode)?;
        let total: f32 = labels.iter().map(|&y| weights[y]).sum();
        Ok(-labels
            .iter()
            .enumerate()
            .map(|(i, &y)| weights[y] * lp[[i, y]])
            .sum::<f32>()
            / total)
    }

    pub(crate) fn set_param_values(&mut self, values: Vec<Array2<f32>>) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameter tensors for a model with {}",
                values.len(),
                params.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.value.dim() != v.dim() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, checkpoint holds {:?}",
                    p.name,
                    p.value.dim(),
                    v.dim()
                )));
            }
            p.value = v;
        }
        Ok(())
    }

    pub(crate) fn snapshot(&self) -> Vec<Array2<f32>> {
        self.params().into_iter().map(|p| p.value.clone()).collect()
    }
}
