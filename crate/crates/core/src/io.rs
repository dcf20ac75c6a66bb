//! Little-endian `f64` blobs with JSON sidecars, plus content hashing.
//!
//! Every persisted array is a pair `name.bin` / `name.json`. The blob is the
//! raw little-endian encoding of the values in row-major order; the sidecar
//! records the shape and free-form metadata (kind tag, mesh hash, ...).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub shape: Vec<usize>,
    #[serde(default)]
    pub kind: String,
    #[serde(default)]
    pub mesh_hash: String,
    /// SHA-256 of the blob bytes.
    pub sha256: String,
}

pub fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Shape(format!("blob length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a sequence of floats, by their exact bit patterns.
pub fn hash_f64s(values: &[f64]) -> String {
    sha256_hex(&f64s_to_bytes(values))
}

/// Hash of any serializable value via its canonical JSON encoding.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let s = serde_json::to_vec(value).expect("serializable");
    sha256_hex(&s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn blob_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.bin")), dir.join(format!("{name}.json")))
}

/// Writes `values` (row-major, `shape` product long) as `dir/name.bin` + `dir/name.json`.
pub fn write_array(dir: &Path, name: &str, shape: &[usize], values: &[f64], kind: &str, mesh_hash: &str) -> Result<Sidecar> {
    let expected: usize = shape.iter().product();
    if expected != values.len() {
        return Err(Error::Shape(format!("array {name}: shape {shape:?} but {} values", values.len())));
    }
    ensure_dir(dir)?;
    let bytes = f64s_to_bytes(values);
    let sidecar = Sidecar {
        shape: shape.to_vec(),
        kind: kind.to_string(),
        mesh_hash: mesh_hash.to_string(),
        sha256: sha256_hex(&bytes),
    };
    let (bin, json) = blob_paths(dir, name);
    fs::write(&bin, &bytes).map_err(io_err(&bin))?;
    write_json(&json, &sidecar)?;
    Ok(sidecar)
}

pub fn read_array(dir: &Path, name: &str) -> Result<(Sidecar, Vec<f64>)> {
    let (bin, json) = blob_paths(dir, name);
    if !bin.exists() {
        return Err(Error::NotFound(bin));
    }
    let sidecar: Sidecar = read_json(&json)?;
    let bytes = fs::read(&bin).map_err(io_err(&bin))?;
    let values = bytes_to_f64s(&bytes)?;
    let expected: usize = sidecar.shape.iter().product();
    if values.len() != expected {
        return Err(Error::Shape(format!(
            "{}: sidecar shape {:?} but {} values",
            bin.display(),
            sidecar.shape,
            values.len()
        )));
    }
    Ok((sidecar, values))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let s = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    fs::write(path, s + "\n").map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let s = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&s).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}
