//! Run manifests: every artifact gets `<artifact>.manifest.json` recording
//! its own hash and the hashes of the inputs it was made from.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub sha256: String,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
    pub settings: serde_json::Value,
    pub timings_ms: BTreeMap<String, u128>,
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str, artifact: &Path, seed: u64, inputs: &[&Path], settings: serde_json::Value) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                // Absolute, so the check works from any working directory.
                let abs = std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
                Ok(InputRecord {
                    path: abs.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Manifest {
            artifact: artifact.display().to_string(),
            sha256: sha256_file(artifact)?,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            inputs,
            settings,
            timings_ms: BTreeMap::new(),
        })
    }

    pub fn timing(mut self, stage: &str, ms: u128) -> Self {
        self.timings_ms.insert(stage.to_string(), ms);
        self
    }

    pub fn write(&self) -> Result<()> {
        let path = manifest_path(Path::new(&self.artifact));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read(artifact: &Path) -> Result<Option<Self>> {
        let path = manifest_path(artifact);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::parse(&path, e.line(), e.to_string()))
    }
}

/// Checks that `artifact` exists and still matches its manifest and the
/// inputs recorded there. Artifacts without a manifest are treated as
/// external inputs. With `force`, mismatches are only logged.
pub fn check_fresh(artifact: &Path, stage: &'static str, force: bool) -> Result<()> {
    if !artifact.exists() {
        return Err(Error::MissingArtifact {
            stage,
            path: artifact.to_path_buf(),
        });
    }
    let Some(m) = Manifest::read(artifact)? else {
        return Ok(());
    };
    let mut problems = Vec::new();
    if sha256_file(artifact)? != m.sha256 {
        problems.push(format!("{} changed since `{}` wrote it", artifact.display(), m.command));
    }
    for input in &m.inputs {
        let p = Path::new(&input.path);
        if p.exists() && sha256_file(p)? != input.sha256 {
            problems.push(format!("input {} changed since {} was made", input.path, artifact.display()));
        }
    }
    if problems.is_empty() {
        return Ok(());
    }
    let msg = format!("{} (rerun `{stage}` or pass --force)", problems.join("; "));
    if force {
        warn!("{msg}");
        Ok(())
    } else {
        Err(Error::Stale(msg))
    }
}
