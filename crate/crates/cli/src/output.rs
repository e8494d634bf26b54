//! Output files and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

/// Writes `body` to `path`, creating parent directories.
pub fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create `{}`", dir.display()))?;
    }
    std::fs::write(path, body).with_context(|| format!("cannot write `{}`", path.display()))
}

fn files_under(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list `{}`", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            files_under(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST) {
            out.push(path.strip_prefix(root).expect("walked from root").to_path_buf());
        }
    }
    Ok(())
}

fn digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn slash_path(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Records the SHA-256 of the given files, relative to `root`.
pub fn write_manifest_for(root: &Path, files: &[PathBuf]) -> Result<()> {
    let mut entries = BTreeMap::new();
    for rel in files {
        entries.insert(slash_path(rel), digest(&root.join(rel))?);
    }
    let body = serde_json::to_string_pretty(&serde_json::json!({ "files": entries }))? + "\n";
    write(&root.join(MANIFEST), body)
}

/// Records the SHA-256 of every file under `root`.
pub fn write_manifest(root: &Path) -> Result<()> {
    let mut files = Vec::new();
    files_under(root, root, &mut files)?;
    write_manifest_for(root, &files)
}
