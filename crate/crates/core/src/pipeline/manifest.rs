//! Per-command manifests: what was read, what was written, under which config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graphs::snapshot::sha256_hex;

pub const MANIFEST_DIR: &str = "manifests";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Relative to the output directory for produced artifacts; as given for
    /// raw inputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
    /// Command-specific counts and figures.
    #[serde(default)]
    pub summary: Value,
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Reference to `rel` inside `out_dir`.
pub fn artifact(out_dir: &Path, rel: &str) -> Result<ArtifactRef> {
    Ok(ArtifactRef {
        path: rel.to_owned(),
        sha256: hash_file(&out_dir.join(rel))?,
    })
}

/// Reference to a file outside the output directory.
pub fn external(path: &Path) -> Result<ArtifactRef> {
    Ok(ArtifactRef {
        path: path.display().to_string(),
        sha256: hash_file(path)?,
    })
}

pub fn manifest_path(out_dir: &Path, command: &str) -> PathBuf {
    out_dir.join(MANIFEST_DIR).join(format!("{command}.json"))
}

impl Manifest {
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = manifest_path(out_dir, &self.command);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(out_dir: &Path, command: &str) -> Result<Manifest> {
        let path = manifest_path(out_dir, command);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Every produced input must still hash to what the manifest recorded.
    pub fn verify_inputs(&self, out_dir: &Path) -> Result<()> {
        for input in &self.inputs {
            let p = Path::new(&input.path);
            let full = if p.is_absolute() { p.to_owned() } else { out_dir.join(p) };
            let actual = hash_file(&full)?;
            if actual != input.sha256 {
                return Err(Error::Snapshot {
                    path: full,
                    reason: format!("changed since {} ran", self.command),
                });
            }
        }
        Ok(())
    }
}
