//! On-disk formats: scene bundles, prior tables, results and OBJ export.

mod bundle;
mod obj;
mod result;

pub use bundle::{load_bundle, save_bundle, Instance, ModelAsset, SceneBundle, SCHEMA_VERSION};
pub use obj::{parse_obj, write_obj_mesh, ObjGroup};
pub use result::{export_obj, load_result, save_result, ResultObject, SceneResult, StageTimings};

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: missing file")]
    MissingFile { path: PathBuf },
    #[error("{path}: schema violation: {detail}")]
    SchemaViolation { path: PathBuf, detail: String },
    #[error("{path}: invariant violation: {detail}")]
    InvariantViolation { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl IoError {
    pub fn path(&self) -> &Path {
        match self {
            IoError::MissingFile { path }
            | IoError::SchemaViolation { path, .. }
            | IoError::InvariantViolation { path, .. }
            | IoError::Io { path, .. } => path,
        }
    }

    pub(crate) fn schema(path: &Path, detail: impl ToString) -> Self {
        IoError::SchemaViolation { path: path.to_path_buf(), detail: detail.to_string() }
    }

    pub(crate) fn invariant(path: &Path, detail: impl ToString) -> Self {
        IoError::InvariantViolation { path: path.to_path_buf(), detail: detail.to_string() }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IoError::MissingFile { path: path.to_path_buf() },
        _ => IoError::Io { path: path.to_path_buf(), source: e },
    })
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let io = |e| IoError::Io { path: path.to_path_buf(), source: e };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io)
}

pub(crate) fn to_json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("in-memory types serialize");
    s.push(b'\n');
    s
}
