//! Run manifest: config echo, content hashes of every output, summaries and
//! wall time.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the resolved configuration (after overrides).
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(cfg)?.as_bytes()))
}

fn walk(dir: &Path, acc: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            walk(&p, acc)?;
        } else {
            acc.push(p);
        }
    }
    Ok(())
}

/// Every file below `dir` except the top-level manifest, sorted by path.
pub fn hash_outputs(dir: &Path) -> Result<Vec<OutputEntry>> {
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    let top = dir.join(MANIFEST);
    let mut out = Vec::new();
    for f in files.into_iter().filter(|f| *f != top) {
        let bytes = std::fs::read(&f)?;
        let rel = f.strip_prefix(dir)?.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        out.push(OutputEntry { path: rel, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub task: &'static str,
    pub status: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub config: &'a ExperimentConfig,
    pub outputs: Vec<OutputEntry>,
    pub summary: &'a Value,
    pub violations: &'a [String],
    pub wall_time_s: f64,
}

impl Manifest<'_> {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let p = dir.join(MANIFEST);
        std::fs::write(&p, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn hashes_are_sorted_and_skip_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("sub/b.bin"), b"1").unwrap();
        std::fs::write(dir.path().join("a.csv"), b"2").unwrap();
        std::fs::write(dir.path().join(MANIFEST), b"{}").unwrap();
        let h = hash_outputs(dir.path()).unwrap();
        let names: Vec<&str> = h.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(names, ["a.csv", "sub/b.bin"]);
    }
}
