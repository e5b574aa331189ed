//! Checkpoint directories: `manifest.json` plus one raw little-endian
//! `f32` file per tensor, row-major.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{contract, Error, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub dtype: String,
    pub seed: u64,
    pub step: u64,
    pub tensors: Vec<TensorRecord>,
}

fn manifest_for(store: &ParamStore<f32>, step: u64) -> Manifest {
    Manifest {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        dtype: "f32".into(),
        seed: store.seed(),
        step,
        tensors: store
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| TensorRecord {
                name: e.name.clone(),
                shape: [e.tensor.rows(), e.tensor.cols()],
                file: format!("tensor_{i:04}.bin"),
            })
            .collect(),
    }
}

fn tensor_bytes(t: &Tensor<f32>) -> Vec<u8> {
    t.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn save_checkpoint(dir: &Path, store: &ParamStore<f32>, step: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = manifest_for(store, step);
    for (rec, entry) in manifest.tensors.iter().zip(store.entries()) {
        let path = dir.join(&rec.file);
        fs::write(&path, tensor_bytes(&entry.tensor)).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Loads a checkpoint; returns the parameters and the stored step counter.
pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore<f32>, u64)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.schema_version != CHECKPOINT_SCHEMA_VERSION || manifest.dtype != "f32" {
        return Err(contract!(
            "unsupported checkpoint schema {} / dtype {}",
            manifest.schema_version,
            manifest.dtype
        ));
    }
    let mut store = ParamStore::new(manifest.seed);
    for rec in &manifest.tensors {
        let path = dir.join(&rec.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let [rows, cols] = rec.shape;
        if bytes.len() != rows * cols * 4 {
            return Err(contract!(
                "{}: expected {} bytes for shape {:?}, found {}",
                path.display(),
                rows * cols * 4,
                rec.shape,
                bytes.len()
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        store.insert(&rec.name, Tensor::from_vec(rows, cols, data))?;
    }
    Ok((store, manifest.step))
}

/// SHA-256 over the manifest and every tensor's bytes, hex encoded.
pub fn checkpoint_digest(store: &ParamStore<f32>, step: u64) -> String {
    let mut hasher = Sha256::new();
    let manifest = serde_json::to_vec(&manifest_for(store, step)).expect("manifest serialises");
    hasher.update(&manifest);
    for entry in store.entries() {
        hasher.update(tensor_bytes(&entry.tensor));
    }
    hex::encode(hasher.finalize())
}
