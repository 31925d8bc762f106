//! Atomic result directories and the run manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::tasks::Artifact;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRef {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub task: String,
    pub field: String,
    pub scenario: ScenarioRef,
    pub rng_seeds: Vec<u64>,
    pub workers: Option<usize>,
    pub started: String,
    pub finished: String,
    /// `pass`, `fail`, or `none` for tasks without a verdict.
    pub verdict: &'static str,
    pub artifacts: Vec<ArtifactEntry>,
}

fn staging_dir(out: &Path) -> PathBuf {
    out.join(format!(".raystab-staging-{}", std::process::id()))
}

/// Writes `artifacts` into `out` through a staging directory so a failed
/// write leaves none of them behind, then writes the manifest built from
/// their hashes with a rename.
pub fn write_run(
    out: &Path,
    artifacts: &[Artifact],
    manifest: impl FnOnce(Vec<ArtifactEntry>) -> Manifest,
) -> io::Result<Manifest> {
    fs::create_dir_all(out)?;
    let stage = staging_dir(out);
    let result = stage_and_move(out, &stage, artifacts, manifest);
    if stage.exists() {
        let _ = fs::remove_dir_all(&stage);
    }
    result
}

fn stage_and_move(
    out: &Path,
    stage: &Path,
    artifacts: &[Artifact],
    manifest: impl FnOnce(Vec<ArtifactEntry>) -> Manifest,
) -> io::Result<Manifest> {
    fs::create_dir_all(stage)?;
    let mut entries = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        fs::write(stage.join(&a.name), &a.bytes)?;
        entries.push(ArtifactEntry {
            file: a.name.clone(),
            sha256: sha256_hex(&a.bytes),
            bytes: a.bytes.len(),
        });
    }
    let mut moved = Vec::new();
    for a in artifacts {
        let dest = out.join(&a.name);
        if let Err(e) = fs::rename(stage.join(&a.name), &dest) {
            for m in &moved {
                let _ = fs::remove_file(m);
            }
            return Err(e);
        }
        moved.push(dest);
    }
    let m = manifest(entries);
    let mut text = serde_json::to_vec_pretty(&m).map_err(io::Error::other)?;
    text.push(b'\n');
    let tmp = stage.join(MANIFEST_FILE);
    fs::write(&tmp, &text)?;
    if let Err(e) = fs::rename(&tmp, out.join(MANIFEST_FILE)) {
        for m in &moved {
            let _ = fs::remove_file(m);
        }
        return Err(e);
    }
    Ok(m)
}
