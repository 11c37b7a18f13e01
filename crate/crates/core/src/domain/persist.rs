//! JSON persistence for trees, manifests and other artifacts.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{CollectionManifest, ManifestError, MemoryTree};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TreeIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: schema_version {found:?} is not supported (expected {expected})")]
    SchemaVersion {
        path: PathBuf,
        found: Option<u64>,
        expected: u32,
    },
    #[error("{path}: invalid manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: ManifestError,
    },
}

impl TreeIoError {
    fn io(path: &Path, source: io::Error) -> Self {
        TreeIoError::Io { path: path.to_path_buf(), source }
    }

    fn parse(path: &Path, e: serde_json::Error) -> Self {
        TreeIoError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// Writes `value` as pretty JSON with a trailing newline. The write goes to a
/// sibling temp file first so readers never observe a half-written file.
pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), TreeIoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| TreeIoError::parse(path, e))?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| TreeIoError::io(dir, e))?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| TreeIoError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| TreeIoError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(String, T), TreeIoError> {
    let text = fs::read_to_string(path).map_err(|e| TreeIoError::io(path, e))?;
    let value = serde_json::from_str(&text).map_err(|e| TreeIoError::parse(path, e))?;
    Ok((text, value))
}

pub fn save_tree(tree: &MemoryTree, path: &Path) -> Result<(), TreeIoError> {
    save_json(tree, path)
}

/// Loads a tree; unknown fields are ignored, a different `schema_version` is
/// rejected before the body is interpreted.
pub fn load_tree(path: &Path) -> Result<MemoryTree, TreeIoError> {
    let (text, raw): (String, serde_json::Value) = read_json(path)?;
    let found = raw.get("schema_version").and_then(|v| v.as_u64());
    if found != Some(u64::from(SCHEMA_VERSION)) {
        return Err(TreeIoError::SchemaVersion {
            path: path.to_path_buf(),
            found,
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_str(&text).map_err(|e| TreeIoError::parse(path, e))
}

/// Loads and normalises a manifest; relative photo paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<CollectionManifest, TreeIoError> {
    let (_, mut manifest): (String, CollectionManifest) = read_json(path)?;
    manifest.normalize(path.parent());
    manifest
        .check()
        .map_err(|source| TreeIoError::Manifest { path: path.to_path_buf(), source })?;
    Ok(manifest)
}
