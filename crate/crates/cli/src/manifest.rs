//! Per-invocation run manifest: arguments plus SHA-256 of every input and
//! output file. Output paths are relative to the output directory.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FORMAT: &str = "mobikg-manifest v1";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, A: Serialize> {
    pub format: &'static str,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub args: &'a A,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn digest_all(paths: &[PathBuf], base: Option<&Path>) -> std::io::Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let shown = base.and_then(|b| p.strip_prefix(b).ok()).unwrap_or(p).to_path_buf();
            Ok(FileDigest { path: shown, sha256: sha256_file(p)? })
        })
        .collect()
}
