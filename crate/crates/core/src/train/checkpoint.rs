//! Checkpoints: `manifest.json` plus `tensors.bin`, a concatenation of
//! little-endian `f32` tensors in lexicographic name order. Optimizer moments
//! are stored as `adam.m.<param>` and `adam.v.<param>`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LossWindow, TrainConfig, TrainState};
use crate::autodiff::{Adam, ParamStore, Tensor};
use crate::model::Model;
use crate::vocab;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const TENSORS: &str = "tensors.bin";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{kind} vocabulary differs at entry {index}: checkpoint has {found:?}, this build has {expected:?}")]
    Vocab {
        kind: &'static str,
        index: usize,
        expected: String,
        found: String,
    },
    #[error("tensor mismatch: {0}")]
    Tensor(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in values (not bytes) into `tensors.bin`.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub config: TrainConfig,
    pub token_vocab: Vec<String>,
    pub char_vocab: Vec<String>,
    /// Optimizer steps taken; training resumes with the batch for this step.
    pub step: u64,
    pub adam_t: u64,
    pub window: LossWindow,
    pub tensors: Vec<TensorEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn all_tensors(state: &TrainState) -> BTreeMap<String, (Vec<usize>, &[f32])> {
    let mut out = BTreeMap::new();
    for (name, t) in state.model.params.iter() {
        out.insert(name.clone(), (t.shape.clone(), t.data.as_slice()));
        out.insert(
            format!("adam.m.{name}"),
            (t.shape.clone(), state.adam.m[name].as_slice()),
        );
        out.insert(
            format!("adam.v.{name}"),
            (t.shape.clone(), state.adam.v[name].as_slice()),
        );
    }
    out
}

pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, (shape, data)) in all_tensors(state) {
        entries.push(TensorEntry {
            name,
            shape,
            offset,
        });
        offset += data.len();
        for v in data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT_VERSION,
        config: state.config.clone(),
        token_vocab: vocab::token_listing(),
        char_vocab: vocab::char_listing(),
        step: state.step,
        adam_t: state.adam.t,
        window: state.window.clone(),
        tensors: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let tp = dir.join(TENSORS);
    fs::write(&tp, blob).map_err(io_err(&tp))?;
    let mp = dir.join(MANIFEST);
    fs::write(&mp, text + "\n").map_err(io_err(&mp))?;
    Ok(())
}

fn check_listing(kind: &'static str, expected: &[String], found: &[String]) -> Result<(), CheckpointError> {
    let n = expected.len().max(found.len());
    for index in 0..n {
        let e = expected.get(index);
        let f = found.get(index);
        if e != f {
            return Err(CheckpointError::Vocab {
                kind,
                index,
                expected: e.cloned().unwrap_or_else(|| "<none>".into()),
                found: f.cloned().unwrap_or_else(|| "<none>".into()),
            });
        }
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CheckpointError> {
    let mp = dir.join(MANIFEST);
    let text = fs::read_to_string(&mp).map_err(io_err(&mp))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    if m.format != FORMAT_VERSION {
        return Err(CheckpointError::Manifest(format!(
            "unsupported format {}",
            m.format
        )));
    }
    check_listing("token", &vocab::token_listing(), &m.token_vocab)?;
    check_listing("character", &vocab::char_listing(), &m.char_vocab)?;
    Ok(m)
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainState, CheckpointError> {
    let manifest = read_manifest(dir)?;
    manifest
        .config
        .validate()
        .map_err(CheckpointError::Manifest)?;
    let tp = dir.join(TENSORS);
    let bytes = fs::read(&tp).map_err(io_err(&tp))?;
    if bytes.len() % 4 != 0 {
        return Err(CheckpointError::Tensor("blob length is not a multiple of 4".into()));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut tensors: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
    let mut expected_offset = 0;
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        if e.offset != expected_offset || e.offset + n > values.len() {
            return Err(CheckpointError::Tensor(format!(
                "{} does not fit the blob",
                e.name
            )));
        }
        expected_offset += n;
        let t = Tensor::from_vec(&e.shape, values[e.offset..e.offset + n].to_vec());
        if tensors.insert(e.name.clone(), t).is_some() {
            return Err(CheckpointError::Tensor(format!("duplicate tensor {}", e.name)));
        }
    }
    if expected_offset != values.len() {
        return Err(CheckpointError::Tensor(format!(
            "blob holds {} values, manifest describes {}",
            values.len(),
            expected_offset
        )));
    }
    let config = manifest.config.clone();
    let shapes = crate::model::param_shapes(&config.model);
    if tensors.len() != 3 * shapes.len() {
        return Err(CheckpointError::Tensor(format!(
            "expected {} tensors, found {}",
            3 * shapes.len(),
            tensors.len()
        )));
    }
    let mut params = ParamStore::new();
    let mut adam = Adam::new(config.optimizer.clone(), &ParamStore::<f32>::new());
    for (name, shape) in shapes {
        let mut take = |key: String| {
            let t = tensors
                .remove(&key)
                .ok_or_else(|| CheckpointError::Tensor(format!("missing {key}")))?;
            if t.shape != shape {
                return Err(CheckpointError::Tensor(format!(
                    "{key} has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            Ok(t)
        };
        let p = take(name.clone())?;
        let m = take(format!("adam.m.{name}"))?;
        let v = take(format!("adam.v.{name}"))?;
        params.insert(name.clone(), p);
        adam.m.insert(name.clone(), m.data);
        adam.v.insert(name, v.data);
    }
    adam.t = manifest.adam_t;
    Ok(TrainState {
        model: Model {
            config: config.model.clone(),
            params,
        },
        adam,
        step: manifest.step,
        window: manifest.window,
        config,
    })
}

/// Just the model, for inference.
pub fn load_model(dir: &Path) -> Result<Model<f32>, CheckpointError> {
    Ok(load_checkpoint(dir)?.model)
}
