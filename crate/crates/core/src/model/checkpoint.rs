//! Checkpoint files: `<stem>.bin` holds every tensor as little-endian `f64`
//! back to back; `<stem>.json` is the manifest naming each tensor's shape and
//! offset together with the model configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{BatchNormStats, Tensor};
use crate::datasets::Scaler;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, XPatch, XPatchParams};

pub const FORMAT: &str = "xpatch-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in elements from the start of the binary file.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    pub bn_batches_seen: Vec<u64>,
    pub bin_sha256: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// A loaded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: XPatch,
    pub scaler: Option<Scaler>,
    pub metadata: BTreeMap<String, String>,
    /// SHA-256 of the binary tensor file.
    pub sha256: String,
}

pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes to a sibling temporary file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn named_tensors<'a>(model: &'a XPatch, scaler: Option<&'a Scaler>) -> Vec<(String, Vec<usize>, &'a [f64])> {
    let mut out: Vec<(String, Vec<usize>, &[f64])> = model
        .params
        .iter()
        .map(|(n, t)| (n.to_string(), t.shape().to_vec(), t.data()))
        .collect();
    for (k, s) in model.bn_stats.iter().enumerate() {
        out.push((format!("nonlinear.bn{}.running_mean", k + 1), vec![s.channels()], &s.mean));
        out.push((format!("nonlinear.bn{}.running_var", k + 1), vec![s.channels()], &s.var));
    }
    if let Some(sc) = scaler {
        out.push(("scaler.mean".into(), vec![sc.mean.len()], &sc.mean));
        out.push(("scaler.std".into(), vec![sc.std.len()], &sc.std));
    }
    out
}

/// Saves `model` (and optionally the data scaler) under `stem`; returns the
/// SHA-256 of the binary file.
pub fn save(stem: &Path, model: &XPatch, scaler: Option<&Scaler>, metadata: BTreeMap<String, String>) -> Result<String> {
    let mut bytes = Vec::new();
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, shape, data) in named_tensors(model, scaler) {
        tensors.push(TensorEntry {
            name,
            shape,
            offset,
        });
        offset += data.len();
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sha = sha256_hex(&bytes);
    let manifest = Manifest {
        format: FORMAT.into(),
        config: model.config.clone(),
        tensors,
        bn_batches_seen: model.bn_stats.iter().map(|s| s.batches_seen).collect(),
        bin_sha256: sha.clone(),
        metadata,
    };
    let (bin, json) = paths(stem);
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_atomic(&bin, &bytes)?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&json, text.as_bytes())?;
    Ok(sha)
}

pub fn load(stem: &Path) -> Result<Checkpoint> {
    let (bin, json) = paths(stem);
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: malformed manifest: {e}", json.display())))?;
    if manifest.format != FORMAT {
        return Err(Error::Data(format!(
            "{}: unsupported checkpoint format '{}'",
            json.display(),
            manifest.format
        )));
    }
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let sha = sha256_hex(&bytes);
    if sha != manifest.bin_sha256 {
        return Err(Error::Data(format!("{}: checksum does not match manifest", bin.display())));
    }
    if bytes.len() % 8 != 0 {
        return Err(Error::Data(format!("{}: truncated tensor data", bin.display())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut tensors = Vec::new();
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let data = values
            .get(e.offset..e.offset + n)
            .ok_or_else(|| Error::Data(format!("tensor '{}' lies outside the binary file", e.name)))?;
        tensors.push((e.name.clone(), Tensor::new(e.shape.clone(), data.to_vec())?));
    }
    let cfg = manifest.config.clone();
    cfg.validate()?;
    let n = cfg.num_patches()?;
    let has_scaler = tensors.iter().any(|(k, _)| k == "scaler.mean");
    let mut take = |name: &str, len: usize| -> Result<Vec<f64>> {
        let pos = tensors
            .iter()
            .position(|(k, _)| k == name)
            .ok_or_else(|| Error::Data(format!("checkpoint lacks tensor '{name}'")))?;
        let (_, t) = tensors.swap_remove(pos);
        if t.len() != len {
            return Err(Error::Config(format!(
                "tensor '{name}' has {} entries, configuration requires {len}",
                t.len()
            )));
        }
        Ok(t.into_data())
    };
    let mut bn_stats: [BatchNormStats; 3] = std::array::from_fn(|_| BatchNormStats::new(n));
    for (k, s) in bn_stats.iter_mut().enumerate() {
        s.mean = take(&format!("nonlinear.bn{}.running_mean", k + 1), n)?;
        s.var = take(&format!("nonlinear.bn{}.running_var", k + 1), n)?;
        s.batches_seen = manifest.bn_batches_seen.get(k).copied().unwrap_or(0);
    }
    let scaler = if has_scaler {
        let m = cfg.channels;
        Some(Scaler {
            mean: take("scaler.mean", m)?,
            std: take("scaler.std", m)?,
        })
    } else {
        None
    };
    let params = XPatchParams::from_tensors(&cfg, tensors)?;
    Ok(Checkpoint {
        model: XPatch::from_parts(cfg, params, bn_stats)?,
        scaler,
        metadata: manifest.metadata,
        sha256: sha,
    })
}
