//! On-disk embedding sets.
//!
//! A set is a directory holding `manifest.json`, `local.bin` and `global.bin`.
//! Payloads are little-endian `f32`, row-major `[record][stripe][coord]` and
//! `[record][coord]`. Labels live in the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmbeddingRecord, EmbeddingSet};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCAL_FILE: &str = "local.bin";
pub const GLOBAL_FILE: &str = "global.bin";
pub const DTYPE_F32LE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub k: usize,
    pub d_local: usize,
    pub d_global: usize,
    pub dtype: String,
    pub ids: Vec<u32>,
    pub cams: Vec<u32>,
}

/// Accepts either the set directory or the path of its `manifest.json`.
fn set_dir(path: &Path) -> PathBuf {
    if path.file_name().is_some_and(|f| f == MANIFEST_FILE) {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        path.to_path_buf()
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let manifest_path = set_dir(path).join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Manifest {
        path: manifest_path,
        source,
    })
}

fn read_payload(path: &Path, count: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = (count * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let dir = set_dir(path);
    let m = read_manifest(&dir)?;
    if m.dtype != DTYPE_F32LE {
        return Err(Error::UnsupportedDtype(m.dtype));
    }
    if m.ids.len() != m.n || m.cams.len() != m.n {
        return Err(Error::ShapeMismatch(format!(
            "manifest declares n={} but lists {} ids and {} cams",
            m.n,
            m.ids.len(),
            m.cams.len()
        )));
    }
    let local = read_payload(&dir.join(LOCAL_FILE), m.n * m.k * m.d_local)?;
    let global = read_payload(&dir.join(GLOBAL_FILE), m.n * m.d_global)?;

    let per_local = m.k * m.d_local;
    let records = (0..m.n)
        .map(|r| {
            let stripes = Array2::from_shape_vec(
                (m.k, m.d_local),
                local[r * per_local..(r + 1) * per_local].to_vec(),
            )
            .expect("payload slice matches (k, d_local)");
            let g = Array1::from(global[r * m.d_global..(r + 1) * m.d_global].to_vec());
            EmbeddingRecord::new(m.ids[r], m.cams[r], g, stripes)
        })
        .collect();
    EmbeddingSet::new(records, m.k, m.d_local, m.d_global)
}

fn encode<'a>(values: impl Iterator<Item = &'a f64>, capacity: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(capacity * 4);
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Writes `set` into directory `path` (created if missing). Values are rounded
/// to `f32`.
pub fn save_embeddings(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let dir = set_dir(path);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let manifest = Manifest {
        n: set.len(),
        k: set.k(),
        d_local: set.d_local(),
        d_global: set.d_global(),
        dtype: DTYPE_F32LE.to_string(),
        ids: set.ids(),
        cams: set.cams(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

    let local = encode(
        set.records().iter().flat_map(|r| r.stripe_feats.iter()),
        set.len() * set.k() * set.d_local(),
    );
    let local_path = dir.join(LOCAL_FILE);
    fs::write(&local_path, local).map_err(|e| Error::io(&local_path, e))?;

    let global = encode(
        set.records().iter().flat_map(|r| r.global_feat.iter()),
        set.len() * set.d_global(),
    );
    let global_path = dir.join(GLOBAL_FILE);
    fs::write(&global_path, global).map_err(|e| Error::io(&global_path, e))?;
    Ok(())
}
