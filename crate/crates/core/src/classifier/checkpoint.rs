//! Self-describing model checkpoints.
//!
//! ```text
//! magic     8 bytes  "GSCKPT\0\0"
//! version   u32 LE   1
//! json_len  u32 LE
//! json      header and tensor table
//! tensors   f32 LE, row-major, in table order
//! ```

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ClassifierConfig, ClassifierModel};
use crate::error::{Error, Result};
use crate::graph::GraphBuildConfig;

const MAGIC: &[u8; 8] = b"GSCKPT\0\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub classifier: ClassifierConfig,
    pub graph: GraphBuildConfig,
    pub class_names: Vec<String>,
    /// Descriptor length of the detector the model was trained with.
    pub descriptor_dim: usize,
    /// Number of logit features appended to each descriptor.
    pub logit_dim: usize,
    /// Free-form job metadata (backend names, prompts, detector settings).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    header: CheckpointHeader,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint<W: Write>(mut out: W, model: &ClassifierModel, header: &CheckpointHeader) -> Result<()> {
    if &header.classifier != model.config() {
        return Err(Error::Checkpoint("header classifier config differs from the model's".into()));
    }
    if header.descriptor_dim + header.logit_dim != model.config().input_dim {
        return Err(Error::Checkpoint(format!(
            "descriptor_dim {} + logit_dim {} != input_dim {}",
            header.descriptor_dim,
            header.logit_dim,
            model.config().input_dim
        )));
    }
    let params = model.params();
    let envelope = Envelope {
        header: header.clone(),
        tensors: params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                rows: p.value.nrows(),
                cols: p.value.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&envelope)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    for p in params {
        for v in p.value.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut input: R) -> Result<(ClassifierModel, CheckpointHeader)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    input.read_exact(&mut word)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    input.read_exact(&mut json)?;
    let envelope: Envelope = serde_json::from_slice(&json)?;
    let mut model = ClassifierModel::new(envelope.header.classifier.clone(), 0)?;
    let expected: Vec<(String, usize, usize)> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.nrows(), p.value.ncols()))
        .collect();
    let stored: Vec<(String, usize, usize)> =
        envelope.tensors.iter().map(|t| (t.name.clone(), t.rows, t.cols)).collect();
    if expected != stored {
        return Err(Error::Checkpoint("tensor table does not match the model layout".into()));
    }
    let mut values = Vec::with_capacity(stored.len());
    for (_, rows, cols) in stored {
        let mut bytes = vec![0u8; rows * cols * 4];
        input.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        values.push(Array2::from_shape_vec((rows, cols), data).expect("length checked"));
    }
    model.set_param_values(values)?;
    Ok((model, envelope.header))
}
