//! Dense and graph-convolution layers with explicit backward passes.
//!
//! Activations are `N x C` row-major matrices with one row per node. Every
//! layer's `backward` accumulates parameter gradients into its [`Param`]s and
//! returns the gradient with respect to its input.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::SceneGraph;
use crate::rng;

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Array2<f32>,
    pub grad: Array2<f32>,
}

impl Param {
    fn new(name: impl Into<String>, value: Array2<f32>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    fn glorot(name: impl Into<String>, rows: usize, cols: usize, r: &mut rng::Rng) -> Self {
        let bound = (6.0 / (rows + cols) as f32).sqrt();
        let value = Array2::from_shape_fn((rows, cols), |_| r.random_range(-bound..bound));
        Self::new(name, value)
    }

    fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, Array2::zeros((rows, cols)))
    }
}

/// Symmetric neighbour lists (both directions of every kept edge).
#[derive(Clone, Debug)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbours: Vec<u32>,
    weights: Vec<f32>,
}

impl Adjacency {
    /// `dropout` removes each undirected edge independently with the given
    /// probability.
    pub fn from_graph(graph: &SceneGraph, dropout: Option<(f64, &mut rng::Rng)>) -> Self {
        let n = graph.node_count();
        let keep: Vec<bool> = match dropout {
            Some((p, r)) if p > 0.0 => graph.edges().iter().map(|_| !r.random_bool(p.min(1.0))).collect(),
            _ => vec![true; graph.edges().len()],
        };
        let mut degree = vec![0usize; n];
        for (&(u, v), _) in graph.edges().iter().zip(&keep).filter(|(_, &k)| k) {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut cursor = offsets.clone();
        let mut neighbours = vec![0u32; offsets[n]];
        let mut weights = vec![0f32; offsets[n]];
        for ((&(u, v), &w), _) in graph
            .edges()
            .iter()
            .zip(graph.weights())
            .zip(&keep)
            .filter(|(_, &k)| k)
        {
            let (u, v) = (u as usize, v as usize);
            neighbours[cursor[u]] = v as u32;
            weights[cursor[u]] = w;
            cursor[u] += 1;
            neighbours[cursor[v]] = u as u32;
            weights[cursor[v]] = w;
            cursor[v] += 1;
        }
        Self {
            offsets,
            neighbours,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    #[inline]
    pub fn neighbours(&self, i: usize) -> &[u32] {
        &self.neighbours[self.range(i)]
    }

    #[inline]
    fn edge_weights(&self, i: usize) -> &[f32] {
        &self.weights[self.range(i)]
    }
}

#[inline]
fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yy, xx) in y.iter_mut().zip(x) {
        *yy += alpha * xx;
    }
}

fn row_sums(m: &Array2<f32>) -> Array2<f32> {
    m.sum_axis(Axis(0)).insert_axis(Axis(0))
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(prefix: &str, input: usize, output: usize, r: &mut rng::Rng) -> Self {
        Self {
            weight: Param::glorot(format!("{prefix}.weight"), input, output, r),
            bias: Param::zeros(format!("{prefix}.bias"), 1, output),
        }
    }

    pub fn forward(&self, x: ArrayView2<f32>) -> Array2<f32> {
        x.dot(&self.weight.value) + &self.bias.value
    }

    pub fn backward(&mut self, x: ArrayView2<f32>, dy: &Array2<f32>) -> Array2<f32> {
        self.weight.grad += &x.t().dot(dy);
        self.bias.grad += &row_sums(dy);
        dy.dot(&self.weight.value.t())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelType {
    Gcn,
    Gat,
    Sage,
}

impl ModelType {
    pub const ALL: [ModelType; 3] = [ModelType::Gcn, ModelType::Gat, ModelType::Sage];
}

impl std::fmt::Display for ModelType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelType::Gcn => "GCN",
            ModelType::Gat => "GAT",
            ModelType::Sage => "SAGE",
        })
    }
}

/// Attention heads used by the GAT layer.
pub const GAT_HEADS: usize = 4;
const LEAKY_SLOPE: f32 = 0.2;

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Conv {
    /// Symmetric-normalized propagation over `A + I`, weighted by edge weights.
    Gcn { lin: Linear },
    /// Mean neighbour aggregation plus a root projection.
    Sage { neigh: Linear, root: Param },
    /// Multi-head attention, heads concatenated and projected to the output
    /// width.
    Gat {
        weight: Param,
        att_src: Param,
        att_dst: Param,
        bias: Param,
        proj: Linear,
        head_dim: usize,
    },
}

pub enum ConvCache {
    Gcn { norm: GcnNorm },
    Sage { agg: Array2<f32> },
    Gat {
        z: Array2<f32>,
        /// Per node, per list entry (self first, then neighbours), per head.
        alpha: Vec<f32>,
        positive: Vec<bool>,
        offsets: Vec<usize>,
        concat: Array2<f32>,
    },
}

pub struct GcnNorm {
    self_coef: Vec<f32>,
    /// Parallel to the adjacency entries.
    coef: Vec<f32>,
}

impl GcnNorm {
    fn new(adj: &Adjacency) -> Self {
        let n = adj.len();
        let deg: Vec<f32> = (0..n)
            .map(|i| 1.0 + adj.edge_weights(i).iter().sum::<f32>())
            .collect();
        let inv_sqrt: Vec<f32> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut coef = Vec::with_capacity(adj.neighbours.len());
        for i in 0..n {
            for (&j, &w) in adj.neighbours(i).iter().zip(adj.edge_weights(i)) {
                coef.push(w * inv_sqrt[i] * inv_sqrt[j as usize]);
            }
        }
        Self {
            self_coef: deg.iter().map(|d| 1.0 / d).collect(),
            coef,
        }
    }

    /// `out = Â x`; `Â` is symmetric so this is also its own transpose.
    fn propagate(&self, adj: &Adjacency, x: &Array2<f32>) -> Array2<f32> {
        let cols = x.ncols();
        let src = x.as_slice().expect("standard layout");
        let mut out = Array2::<f32>::zeros(x.raw_dim());
        let dst = out.as_slice_mut().expect("standard layout");
        for i in 0..adj.len() {
            let row = &mut dst[i * cols..(i + 1) * cols];
            axpy(self.self_coef[i], &src[i * cols..(i + 1) * cols], row);
            for (k, &j) in adj.range(i).zip(adj.neighbours(i)) {
                let j = j as usize;
                axpy(self.coef[k], &src[j * cols..(j + 1) * cols], row);
            }
        }
        out
    }
}

fn mean_aggregate(adj: &Adjacency, x: &Array2<f32>) -> Array2<f32> {
    let cols = x.ncols();
    let src = x.as_slice().expect("standard layout");
    let mut out = Array2::<f32>::zeros(x.raw_dim());
    let dst = out.as_slice_mut().expect("standard layout");
    for i in 0..adj.len() {
        let nb = adj.neighbours(i);
        if nb.is_empty() {
            continue;
        }
        let scale = 1.0 / nb.len() as f32;
        let row = &mut dst[i * cols..(i + 1) * cols];
        for &j in nb {
            let j = j as usize;
            axpy(scale, &src[j * cols..(j + 1) * cols], row);
        }
    }
    out
}

fn mean_aggregate_backward(adj: &Adjacency, d_agg: &Array2<f32>) -> Array2<f32> {
    let cols = d_agg.ncols();
    let src = d_agg.as_slice().expect("standard layout");
    let mut out = Array2::<f32>::zeros(d_agg.raw_dim());
    let dst = out.as_slice_mut().expect("standard layout");
    for i in 0..adj.len() {
        let nb = adj.neighbours(i);
        if nb.is_empty() {
            continue;
        }
        let scale = 1.0 / nb.len() as f32;
        let g = &src[i * cols..(i + 1) * cols];
        for &j in nb {
            let j = j as usize;
            axpy(scale, g, &mut dst[j * cols..(j + 1) * cols]);
        }
    }
    out
}

impl Conv {
    pub fn new(kind: ModelType, prefix: &str, input: usize, output: usize, r: &mut rng::Rng) -> Self {
        match kind {
            ModelType::Gcn => Conv::Gcn {
                lin: Linear::new(&format!("{prefix}.lin"), input, output, r),
            },
            ModelType::Sage => Conv::Sage {
                neigh: Linear::new(&format!("{prefix}.lin_neigh"), input, output, r),
                root: Param::glorot(format!("{prefix}.lin_root.weight"), input, output, r),
            },
            ModelType::Gat => {
                let head_dim = (output / GAT_HEADS).max(1);
                let width = head_dim * GAT_HEADS;
                Conv::Gat {
                    weight: Param::glorot(format!("{prefix}.lin.weight"), input, width, r),
                    att_src: Param::glorot(format!("{prefix}.att_src"), GAT_HEADS, head_dim, r),
                    att_dst: Param::glorot(format!("{prefix}.att_dst"), GAT_HEADS, head_dim, r),
                    bias: Param::zeros(format!("{prefix}.bias"), 1, width),
                    proj: Linear::new(&format!("{prefix}.proj"), width, output, r),
                    head_dim,
                }
            }
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Conv::Gcn { lin } => lin.params(),
            Conv::Sage { neigh, root } => {
                let mut p = neigh.params();
                p.push(root);
                p
            }
            Conv::Gat {
                weight,
                att_src,
                att_dst,
                bias,
                proj,
                ..
            } => {
                let mut p = vec![weight, att_src, att_dst, bias];
                p.extend(proj.params());
                p
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Conv::Gcn { lin } => lin.params_mut(),
            Conv::Sage { neigh, root } => {
                let mut p = neigh.params_mut();
                p.push(root);
                p
            }
            Conv::Gat {
                weight,
                att_src,
                att_dst,
                bias,
                proj,
                ..
            } => {
                let mut p = vec![weight, att_src, att_dst, bias];
                p.extend(proj.params_mut());
                p
            }
        }
    }

    pub fn forward(&self, x: &Array2<f32>, adj: &Adjacency) -> (Array2<f32>, ConvCache) {
        match self {
            Conv::Gcn { lin } => {
                let norm = GcnNorm::new(adj);
                let z = x.dot(&lin.weight.value);
                let y = norm.propagate(adj, &z) + &lin.bias.value;
                (y, ConvCache::Gcn { norm })
            }
            Conv::Sage { neigh, root } => {
                let agg = mean_aggregate(adj, x);
                let y = neigh.forward(agg.view()) + x.dot(&root.value);
                (y, ConvCache::Sage { agg })
            }
            Conv::Gat {
                weight,
                att_src,
                att_dst,
                bias,
                proj,
                head_dim,
            } => {
                let d = *head_dim;
                let n = adj.len();
                let z = x.dot(&weight.value);
                let width = z.ncols();
                let zs = z.as_slice().expect("standard layout");
                let a_src = att_src.value.as_slice().expect("standard layout");
                let a_dst = att_dst.value.as_slice().expect("standard layout");
                let mut s = vec![0f32; n * GAT_HEADS];
                let mut t = vec![0f32; n * GAT_HEADS];
                for i in 0..n {
                    for h in 0..GAT_HEADS {
                        let zi = &zs[i * width + h * d..i * width + (h + 1) * d];
                        s[i * GAT_HEADS + h] = zi.iter().zip(&a_src[h * d..(h + 1) * d]).map(|(a, b)| a * b).sum();
                        t[i * GAT_HEADS + h] = zi.iter().zip(&a_dst[h * d..(h + 1) * d]).map(|(a, b)| a * b).sum();
                    }
                }
                let mut offsets = vec![0usize; n + 1];
                for i in 0..n {
                    offsets[i + 1] = offsets[i] + 1 + adj.neighbours(i).len();
                }
                let total = offsets[n];
                let mut alpha = vec![0f32; total * GAT_HEADS];
                let mut positive = vec![false; total * GAT_HEADS];
                let mut concat = Array2::<f32>::zeros((n, width));
                let out = concat.as_slice_mut().expect("standard layout");
                let mut list: Vec<usize> = Vec::new();
                for i in 0..n {
                    list.clear();
                    list.push(i);
                    list.extend(adj.neighbours(i).iter().map(|&j| j as usize));
                    for h in 0..GAT_HEADS {
                        let mut max = f32::NEG_INFINITY;
                        for (slot, &j) in list.iter().enumerate() {
                            let pre = t[i * GAT_HEADS + h] + s[j * GAT_HEADS + h];
                            let idx = (offsets[i] + slot) * GAT_HEADS + h;
                            positive[idx] = pre > 0.0;
                            let e = if pre > 0.0 { pre } else { LEAKY_SLOPE * pre };
                            alpha[idx] = e;
                            max = max.max(e);
                        }
                        let mut sum = 0.0;
                        for slot in 0..list.len() {
                            let idx = (offsets[i] + slot) * GAT_HEADS + h;
                            alpha[idx] = (alpha[idx] - max).exp();
                            sum += alpha[idx];
                        }
                        let row = &mut out[i * width + h * d..i * width + (h + 1) * d];
                        for (slot, &j) in list.iter().enumerate() {
                            let idx = (offsets[i] + slot) * GAT_HEADS + h;
                            alpha[idx] /= sum;
                            axpy(alpha[idx], &zs[j * width + h * d..j * width + (h + 1) * d], row);
                        }
                    }
                }
                concat += &bias.value;
                let y = proj.forward(concat.view());
                (
                    y,
                    ConvCache::Gat {
                        z,
                        alpha,
                        positive,
                        offsets,
                        concat,
                    },
                )
            }
        }
    }

    pub fn backward(
        &mut self,
        x: &Array2<f32>,
        adj: &Adjacency,
        cache: &ConvCache,
        dy: &Array2<f32>,
    ) -> Array2<f32> {
        match (self, cache) {
            (Conv::Gcn { lin }, ConvCache::Gcn { norm }) => {
                lin.bias.grad += &row_sums(dy);
                let dz = norm.propagate(adj, dy);
                lin.weight.grad += &x.t().dot(&dz);
                dz.dot(&lin.weight.value.t())
            }
            (Conv::Sage { neigh, root }, ConvCache::Sage { agg }) => {
                let d_agg = neigh.backward(agg.view(), dy);
                root.grad += &x.t().dot(dy);
                dy.dot(&root.value.t()) + mean_aggregate_backward(adj, &d_agg)
            }
            (
                Conv::Gat {
                    weight,
                    att_src,
                    att_dst,
                    bias,
                    proj,
                    head_dim,
                },
                ConvCache::Gat {
                    z,
                    alpha,
                    positive,
                    offsets,
                    concat,
                },
            ) => {
                let d = *head_dim;
                let n = adj.len();
                let d_concat = proj.backward(concat.view(), dy);
                bias.grad += &row_sums(&d_concat);
                let width = z.ncols();
                let zs = z.as_slice().expect("standard layout");
                let du = d_concat.as_slice().expect("standard layout");
                let mut dz = Array2::<f32>::zeros(z.raw_dim());
                let dzs = dz.as_slice_mut().expect("standard layout");
                let mut ds = vec![0f32; n * GAT_HEADS];
                let mut dt = vec![0f32; n * GAT_HEADS];
                let mut list: Vec<usize> = Vec::new();
                let mut d_alpha: Vec<f32> = Vec::new();
                for i in 0..n {
                    list.clear();
                    list.push(i);
                    list.extend(adj.neighbours(i).iter().map(|&j| j as usize));
                    for h in 0..GAT_HEADS {
                        let dui = &du[i * width + h * d..i * width + (h + 1) * d];
                        d_alpha.clear();
                        let mut weighted = 0.0;
                        for (slot, &j) in list.iter().enumerate() {
                            let idx = (offsets[i] + slot) * GAT_HEADS + h;
                            let zj = &zs[j * width + h * d..j * width + (h + 1) * d];
                            let da: f32 = dui.iter().zip(zj).map(|(a, b)| a * b).sum();
                            d_alpha.push(da);
                            weighted += alpha[idx] * da;
                            axpy(alpha[idx], dui, &mut dzs[j * width + h * d..j * width + (h + 1) * d]);
                        }
                        for (slot, &j) in list.iter().enumerate() {
                            let idx = (offsets[i] + slot) * GAT_HEADS + h;
                            let de = alpha[idx] * (d_alpha[slot] - weighted);
                            let dpre = if positive[idx] { de } else { LEAKY_SLOPE * de };
                            dt[i * GAT_HEADS + h] += dpre;
                            ds[j * GAT_HEADS + h] += dpre;
                        }
                    }
                }
                let a_src = att_src.value.as_slice().expect("standard layout").to_vec();
                let a_dst = att_dst.value.as_slice().expect("standard layout").to_vec();
                let g_src = att_src.grad.as_slice_mut().expect("standard layout");
                let g_dst = att_dst.grad.as_slice_mut().expect("standard layout");
                for i in 0..n {
                    for h in 0..GAT_HEADS {
                        let range = i * width + h * d..i * width + (h + 1) * d;
                        let (si, ti) = (ds[i * GAT_HEADS + h], dt[i * GAT_HEADS + h]);
                        axpy(si, &zs[range.clone()], &mut g_src[h * d..(h + 1) * d]);
                        axpy(ti, &zs[range.clone()], &mut g_dst[h * d..(h + 1) * d]);
                        let dzi = &mut dzs[range];
                        axpy(si, &a_src[h * d..(h + 1) * d], dzi);
                        axpy(ti, &a_dst[h * d..(h + 1) * d], dzi);
                    }
                }
                weight.grad += &x.t().dot(&dz);
                dz.dot(&weight.value.t())
            }
            _ => unreachable!("cache built by the same layer"),
        }
    }
}
