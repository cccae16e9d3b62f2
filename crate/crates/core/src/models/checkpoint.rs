//! Checkpoint directories: a TOML `manifest` plus one raw little-endian f64
//! file per non-empty table (row-major, no header).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::TABLE_NAMES;
use super::{ModelKind, ModelOptions, ModelParams, ModelState};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: String,
    pub dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub seed: u64,
    #[serde(default)]
    pub vocab_hash: String,
    pub options: ModelOptions,
    pub tables: Vec<TableEntry>,
    /// Tables that ride along with the model (e.g. the senior scaling matrix).
    #[serde(default)]
    pub extra: Vec<TableEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        #[derive(Deserialize)]
        struct VersionOnly {
            format_version: u32,
        }
        let v: VersionOnly = toml::from_str(&text)
            .map_err(|e| Error::Integrity(format!("{}: unreadable manifest: {e}", path.display())))?;
        if v.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: v.format_version,
                expected: FORMAT_VERSION,
            });
        }
        toml::from_str(&text).map_err(|e| Error::Integrity(format!("{}: malformed manifest: {e}", path.display())))
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        self.kind.parse()
    }
}

fn encode(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn write_table(dir: &Path, name: &str, rows: usize, cols: usize, values: &[f64]) -> Result<TableEntry> {
    let bytes = encode(values);
    let file = format!("{name}.bin");
    let path = dir.join(&file);
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    Ok(TableEntry {
        name: name.to_string(),
        file,
        rows,
        cols,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Reads and verifies one table listed in a manifest.
pub fn read_table(dir: &Path, entry: &TableEntry) -> Result<Vec<f64>> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = entry.rows * entry.cols * 8;
    if bytes.len() != expected {
        return Err(Error::Integrity(format!(
            "{}: expected {expected} bytes for a {}x{} table, found {}",
            path.display(),
            entry.rows,
            entry.cols,
            bytes.len()
        )));
    }
    let digest = hex::encode(Sha256::digest(&bytes));
    if digest != entry.sha256 {
        return Err(Error::Integrity(format!("{}: checksum mismatch", path.display())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect())
}

/// Writes `state` (plus optional extra named tables) into `dir`.
pub fn save_checkpoint(
    dir: &Path,
    state: &ModelState,
    vocab_hash: &str,
    extra: &[(&str, usize, usize, &[f64])],
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tables = Vec::new();
    for ((name, rows, cols), values) in state
        .table_shapes()
        .into_iter()
        .zip(state.params.tensors())
    {
        if values.is_empty() {
            continue;
        }
        tables.push(write_table(dir, name, rows, cols, values)?);
    }
    let mut extras = Vec::new();
    for (name, rows, cols, values) in extra {
        if rows * cols != values.len() {
            return Err(Error::Config(format!("extra table '{name}' has inconsistent shape")));
        }
        extras.push(write_table(dir, name, *rows, *cols, values)?);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: state.kind.name().to_string(),
        dim: state.dim,
        num_entities: state.num_entities,
        num_relations: state.num_relations,
        seed: state.seed,
        vocab_hash: vocab_hash.to_string(),
        options: state.options,
        tables,
        extra: extras,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Integrity(e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads and verifies a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<(ModelState, Manifest)> {
    let manifest = Manifest::read(dir)?;
    let kind = manifest
        .model_kind()
        .map_err(|e| Error::Integrity(format!("{}: {e}", dir.display())))?;
    // Re-create the shapes, then overwrite each table from disk.
    let mut state = ModelState::new(
        kind,
        manifest.dim,
        manifest.num_entities,
        manifest.num_relations,
        manifest.seed,
        manifest.options,
    )
    .map_err(|e| Error::Integrity(format!("{}: {e}", dir.display())))?;
    let expected: Vec<(&str, usize, usize)> = state
        .table_shapes()
        .into_iter()
        .filter(|(name, _, _)| {
            let idx = TABLE_NAMES.iter().position(|n| n == name).expect("known table");
            !state.params.tensors()[idx].is_empty()
        })
        .collect();
    if expected.len() != manifest.tables.len() {
        return Err(Error::Integrity(format!(
            "{}: manifest lists {} tables, model kind needs {}",
            dir.display(),
            manifest.tables.len(),
            expected.len()
        )));
    }
    let mut params = ModelParams::default();
    for ((name, rows, cols), entry) in expected.iter().zip(&manifest.tables) {
        if entry.name != *name || entry.rows != *rows || entry.cols != *cols {
            return Err(Error::Integrity(format!(
                "{}: table '{}' ({}x{}) does not match expected '{name}' ({rows}x{cols})",
                dir.display(),
                entry.name,
                entry.rows,
                entry.cols
            )));
        }
        let values = read_table(dir, entry)?;
        match *name {
            "entity" => params.entity = values,
            "relation" => params.relation = values,
            "rotation" => params.rotation = values,
            "curvature" => params.curvature = values,
            "bias_head" => params.bias_head = values,
            "bias_tail" => params.bias_tail = values,
            _ => unreachable!(),
        }
    }
    state.params = params;
    Ok((state, manifest))
}
