//! Checkpoint files: `PLNTCKPT`, a little-endian u64 header length, a JSON
//! header, then every tensor as little-endian f32 in header order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::spec::ModelSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PLNTCKPT";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    spec_hash: String,
    init_seed: u64,
    metadata: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(params: &ModelParams<f32>) -> Result<Vec<u8>> {
    params.validate()?;
    let named = params.named();
    let header = Header {
        spec: params.spec.clone(),
        spec_hash: params.spec_hash.clone(),
        init_seed: params.init_seed,
        metadata: params.metadata.clone(),
        tensors: named
            .iter()
            .map(|(name, t, _)| TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::json("checkpoint header", e))?;
    let body: usize = named.iter().map(|(_, t, _)| t.len() * 4).sum();
    let mut out = Vec::with_capacity(16 + json.len() + body);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t, _) in &named {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ModelParams<f32>> {
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body_start = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..body_start]).map_err(|e| bad(format!("bad header: {e}")))?;
    let actual = header.spec.hash();
    if header.spec_hash != actual {
        return Err(bad(format!(
            "spec hash mismatch: header says {}, spec hashes to {actual}",
            header.spec_hash
        )));
    }
    let mut params = ModelParams::<f32>::skeleton(&header.spec).map_err(|e| bad(e.to_string()))?;
    params.init_seed = header.init_seed;
    params.metadata = header.metadata;
    let names: Vec<String> = params.named().into_iter().map(|(n, _, _)| n).collect();
    if names.len() != header.tensors.len() {
        return Err(bad(format!(
            "expected {} tensors, header lists {}",
            names.len(),
            header.tensors.len()
        )));
    }
    let mut offset = body_start;
    for ((name, (tensor, _)), entry) in names.iter().zip(params.tensors_mut()).zip(&header.tensors) {
        if *name != entry.name || tensor.shape != entry.shape {
            return Err(bad(format!(
                "tensor {} {:?} does not match expected {name} {:?}",
                entry.name, entry.shape, tensor.shape
            )));
        }
        let end = offset + tensor.len() * 4;
        let chunk = bytes.get(offset..end).ok_or_else(|| bad(format!("truncated data in {name}")))?;
        for (v, b) in tensor.data.iter_mut().zip(chunk.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
        }
        offset = end;
    }
    if offset != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - offset)));
    }
    Ok(params)
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial checkpoint.
pub fn save_checkpoint(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(params)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
