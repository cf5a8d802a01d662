use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;
use crate::jsonl::write_atomic;
use crate::matrix_io::manifest_path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub artifact: String,
    pub sha256: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<InputHash>,
    #[serde(default)]
    pub notes: BTreeMap<String, serde_json::Value>,
    pub created_unix: u64,
}

/// Writes artifacts of one stage into the run directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
}

pub fn file_hash(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

impl Artifacts {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8], inputs: &[&Path]) -> std::io::Result<PathBuf> {
        self.write_with_notes(name, bytes, inputs, BTreeMap::new())
    }

    pub fn write_with_notes(&self, name: &str, bytes: &[u8], inputs: &[&Path], notes: BTreeMap<String, serde_json::Value>) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path(name);
        write_atomic(&path, bytes)?;
        self.record(&path, inputs, notes)?;
        Ok(path)
    }

    /// Writes the manifest of an artifact some other writer produced.
    pub fn record(&self, path: &Path, inputs: &[&Path], notes: BTreeMap<String, serde_json::Value>) -> std::io::Result<()> {
        let inputs = inputs
            .iter()
            .filter(|p| p.exists())
            .map(|p| {
                Ok(InputHash {
                    path: p.display().to_string(),
                    sha256: file_hash(p)?,
                })
            })
            .collect::<std::io::Result<Vec<_>>>()?;
        let m = RunManifest {
            stage: self.stage.clone(),
            artifact: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            sha256: file_hash(path)?,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            inputs,
            notes,
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        let mut bytes = serde_json::to_vec_pretty(&m)?;
        bytes.push(b'\n');
        write_atomic(&manifest_path(path), &bytes)
    }
}

pub fn read_manifest(path: &Path) -> Option<RunManifest> {
    serde_json::from_slice(&std::fs::read(manifest_path(path)).ok()?).ok()
}

/// Files under `dir` (recursively) lacking a manifest.
pub fn orphans(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".manifest.json") && !manifest_path(&p).exists() {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}
