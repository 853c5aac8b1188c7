use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{file_err, IoError};
use crate::geo::BBox;
use crate::pkg::Timestamp;

/// Metadata for one dataset file. `uri` is relative to the catalog's
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub dataset_id: String,
    pub provider: String,
    pub schema: String,
    pub coverage: BBox,
    /// `[start, end]`, inclusive.
    pub time_span: [Timestamp; 2],
    pub uri: String,
}

/// Resolves `uri` against `root`, rejecting absolute paths and any `..`
/// component so that entries stay inside the workspace.
pub fn resolve_uri(root: &Path, uri: &str) -> Result<PathBuf, IoError> {
    let p = Path::new(uri);
    if uri.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(IoError::Config(format!("catalog uri {uri:?} must be a relative path inside the workspace")));
    }
    Ok(root.join(p))
}

pub fn write_catalog(entries: &[CatalogEntry], path: &Path) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(entries)?;
    text.push('\n');
    std::fs::write(path, text).map_err(file_err(path))
}

/// Reads a catalog and checks that every entry is valid and its file exists.
pub fn read_catalog(path: &Path) -> Result<Vec<CatalogEntry>, IoError> {
    let text = std::fs::read_to_string(path).map_err(file_err(path))?;
    let entries: Vec<CatalogEntry> = serde_json::from_str(&text).map_err(|e| IoError::Parse {
        file: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    let root = path.parent().unwrap_or(Path::new("."));
    for e in &entries {
        e.coverage.validate()?;
        if e.time_span[0] > e.time_span[1] {
            return Err(IoError::Config(format!("entry {}: time span is reversed", e.dataset_id)));
        }
        let target = resolve_uri(root, &e.uri)?;
        if !target.is_file() {
            return Err(IoError::Config(format!("entry {}: {} does not exist", e.dataset_id, target.display())));
        }
    }
    Ok(entries)
}
