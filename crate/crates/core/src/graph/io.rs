//! Binary graph container used to cache graphs between pipeline stages.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic       8 bytes   "GSGRAPH\0"
//! version     u32       1
//! width       u32       image width
//! height      u32       image height
//! node_count  u32
//! feature_dim u32       D + T
//! desc_dim    u32       D
//! edge_count  u32
//! seed        u64
//! k_effective u32
//! hash_len    u32       followed by hash_len bytes of UTF-8 config hash
//! nodes       node_count x { x f32, y f32, feature_dim x f32 }
//! edges       edge_count x { u u32, v u32, weight f32 }   u < v
//! ```

use std::io::{Read, Write};

use super::{EnhancedPoint, GraphMeta, SceneGraph};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GSGRAPH\0";
const VERSION: u32 = 1;

pub fn write_graph<W: Write>(graph: &SceneGraph, mut out: W) -> Result<()> {
    let (w, h) = graph.image_size();
    out.write_all(MAGIC)?;
    for v in [
        VERSION,
        w as u32,
        h as u32,
        graph.node_count() as u32,
        graph.feature_dim() as u32,
        graph.descriptor_dim() as u32,
        graph.edges().len() as u32,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&graph.meta().seed.to_le_bytes())?;
    out.write_all(&(graph.meta().k_effective as u32).to_le_bytes())?;
    let hash = graph.meta().config_hash.as_bytes();
    out.write_all(&(hash.len() as u32).to_le_bytes())?;
    out.write_all(hash)?;
    for node in graph.nodes() {
        out.write_all(&node.x.to_le_bytes())?;
        out.write_all(&node.y.to_le_bytes())?;
        for f in &node.features {
            out.write_all(&f.to_le_bytes())?;
        }
    }
    for (&(u, v), &wt) in graph.edges().iter().zip(graph.weights()) {
        out.write_all(&u.to_le_bytes())?;
        out.write_all(&v.to_le_bytes())?;
        out.write_all(&wt.to_le_bytes())?;
    }
    Ok(())
}

fn u32_from<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn f32_from<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

pub fn read_graph<R: Read>(mut input: R) -> Result<SceneGraph> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidInput("not a graph container".into()));
    }
    let version = u32_from(&mut input)?;
    if version != VERSION {
        return Err(Error::InvalidInput(format!("unsupported graph container version {version}")));
    }
    let width = u32_from(&mut input)? as usize;
    let height = u32_from(&mut input)? as usize;
    let node_count = u32_from(&mut input)? as usize;
    let feature_dim = u32_from(&mut input)? as usize;
    let descriptor_dim = u32_from(&mut input)? as usize;
    let edge_count = u32_from(&mut input)? as usize;
    let mut seed = [0u8; 8];
    input.read_exact(&mut seed)?;
    let k_effective = u32_from(&mut input)? as usize;
    let hash_len = u32_from(&mut input)? as usize;
    let mut hash = vec![0u8; hash_len];
    input.read_exact(&mut hash)?;
    let config_hash =
        String::from_utf8(hash).map_err(|_| Error::InvalidInput("config hash is not UTF-8".into()))?;

    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let x = f32_from(&mut input)?;
        let y = f32_from(&mut input)?;
        let features = (0..feature_dim).map(|_| f32_from(&mut input)).collect::<Result<_>>()?;
        nodes.push(EnhancedPoint { x, y, features });
    }
    let mut edges = Vec::with_capacity(edge_count);
    let mut stored = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        let u = u32_from(&mut input)? as usize;
        let v = u32_from(&mut input)? as usize;
        edges.push((u, v));
        stored.push(f32_from(&mut input)?);
    }
    let meta = GraphMeta {
        seed: u64::from_le_bytes(seed),
        config_hash,
        k_effective,
        warnings: Vec::new(),
    };
    let graph = SceneGraph::from_edges(nodes, edges, (width, height), descriptor_dim, meta)?;
    if graph.edges().len() != edge_count
        || graph.weights().iter().zip(&stored).any(|(a, b)| (a - b).abs() > 1e-5)
    {
        return Err(Error::InvalidInput("graph container edges or weights are inconsistent".into()));
    }
    Ok(graph)
}
