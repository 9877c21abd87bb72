//! JSON checkpoints of named parameter tensors.
//!
//! ```json
//! {"magic": "SLASHNPP1",
//!  "models": {"digit": {"type": "softmax_linear",
//!                       "tensors": [{"name": "weight", "shape": [10, 10], "data": [...]},
//!                                   {"name": "bias", "shape": [10], "data": [...]}]}}}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FixedTable, NppModel, NppModels, SoftmaxLinear, TabularJoint};

pub const CHECKPOINT_MAGIC: &str = "SLASHNPP1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a checkpoint (magic `{0}`)")]
    Magic(String),
    #[error("model `{model}`: {message}")]
    Shape { model: String, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    #[serde(rename = "type")]
    kind: String,
    tensors: Vec<Tensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct File {
    magic: String,
    models: BTreeMap<String, Entry>,
}

fn entry(model: &NppModel) -> Entry {
    let tensors = match model {
        NppModel::SoftmaxLinear(m) => {
            let (w, b) = m.params.split_at(m.outcomes * m.features);
            vec![
                Tensor {
                    name: "weight".into(),
                    shape: vec![m.outcomes, m.features],
                    data: w.to_vec(),
                },
                Tensor {
                    name: "bias".into(),
                    shape: vec![m.outcomes],
                    data: b.to_vec(),
                },
            ]
        }
        NppModel::TabularJoint(m) => vec![Tensor {
            name: "logits".into(),
            shape: vec![m.bins, m.outcomes],
            data: m.logits.clone(),
        }],
        NppModel::FixedTable(t) => vec![Tensor {
            name: "probs".into(),
            shape: vec![t.probs.len()],
            data: t.probs.clone(),
        }],
    };
    Entry {
        kind: model.kind_name().into(),
        tensors,
    }
}

fn tensor<'a>(name: &str, e: &'a Entry, t: &str, rank: usize) -> Result<&'a Tensor, CheckpointError> {
    let bad = |message: String| CheckpointError::Shape {
        model: name.into(),
        message,
    };
    let found = e
        .tensors
        .iter()
        .find(|x| x.name == t)
        .ok_or_else(|| bad(format!("missing tensor `{t}`")))?;
    if found.shape.len() != rank {
        return Err(bad(format!("tensor `{t}` must have rank {rank}")));
    }
    if found.shape.iter().product::<usize>() != found.data.len() {
        return Err(bad(format!(
            "tensor `{t}` has shape {:?} but {} values",
            found.shape,
            found.data.len()
        )));
    }
    Ok(found)
}

fn model(name: &str, e: &Entry) -> Result<NppModel, CheckpointError> {
    Ok(match e.kind.as_str() {
        "softmax_linear" => {
            let w = tensor(name, e, "weight", 2)?;
            let b = tensor(name, e, "bias", 1)?;
            if b.shape[0] != w.shape[0] {
                return Err(CheckpointError::Shape {
                    model: name.into(),
                    message: "bias length differs from weight rows".into(),
                });
            }
            let mut params = w.data.clone();
            params.extend_from_slice(&b.data);
            NppModel::SoftmaxLinear(SoftmaxLinear {
                outcomes: w.shape[0],
                features: w.shape[1],
                params,
            })
        }
        "tabular_joint" => {
            let l = tensor(name, e, "logits", 2)?;
            NppModel::TabularJoint(TabularJoint {
                bins: l.shape[0],
                outcomes: l.shape[1],
                logits: l.data.clone(),
            })
        }
        "fixed_table" => NppModel::FixedTable(FixedTable {
            probs: tensor(name, e, "probs", 1)?.data.clone(),
        }),
        other => {
            return Err(CheckpointError::Shape {
                model: name.into(),
                message: format!("unknown model type `{other}`"),
            })
        }
    })
}

pub fn checkpoint_to_string(models: &NppModels) -> String {
    let file = File {
        magic: CHECKPOINT_MAGIC.into(),
        models: models.iter().map(|(k, m)| (k.clone(), entry(m))).collect(),
    };
    serde_json::to_string(&file).expect("checkpoint serializes")
}

pub fn checkpoint_from_str(text: &str) -> Result<NppModels, CheckpointError> {
    let file: File = serde_json::from_str(text)?;
    if file.magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Magic(file.magic));
    }
    file.models.iter().map(|(k, e)| Ok((k.clone(), model(k, e)?))).collect()
}

pub fn save_checkpoint(models: &NppModels, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint_to_string(models))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NppModels, CheckpointError> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}
