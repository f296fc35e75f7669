//! Run manifests: every CLI run freezes its effective configuration,
//! seeds, and input fingerprints so it can be reproduced exactly.

use crate::error::{Error, Result};
use crate::util::{sha256_file, sha256_hex};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Content hash of one input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileFingerprint {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileFingerprint {
    pub fn of(path: &Path) -> Result<Self> {
        let (sha256, bytes) = sha256_file(path)?;
        Ok(FileFingerprint {
            path: path.display().to_string(),
            sha256,
            bytes,
        })
    }
}

/// The frozen description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    /// Command line shape, e.g. `diagnose shift`.
    pub command: String,
    /// Effective configuration after flag/file/default precedence.
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: BTreeMap<String, FileFingerprint>,
    pub encoder_fingerprint: Option<String>,
    pub outputs: Vec<String>,
    /// Free-form decisions recorded with the run (separator choices, title
    /// handling, and similar).
    pub notes: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.into(),
            config,
            seed,
            inputs: BTreeMap::new(),
            encoder_fingerprint: None,
            outputs: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, name: impl Into<String>, path: &Path) -> Result<()> {
        self.inputs.insert(name.into(), FileFingerprint::of(path)?);
        Ok(())
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.notes.insert(key.into(), value.into());
    }

    /// Hash of the effective configuration, used to key merged reports.
    pub fn config_hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(&self.config)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::Manifest(format!("serialization failed: {e}")))?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Read a manifest from a `manifest.json` path or a run directory.
    pub fn read(path: &Path) -> Result<Self> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: RunManifest = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Manifest(format!("{}: {e}", file.display())))?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "{}: schema version {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
                file.display(),
                manifest.schema_version
            )));
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_and_checks_schema() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("input.txt");
        std::fs::write(&data, "hello\n").unwrap();

        let mut manifest = RunManifest::new(
            "diagnose shift",
            serde_json::json!({"m": 100, "pooling": "mean"}),
            7,
        );
        manifest.add_input("pairs", &data).unwrap();
        manifest.note("elongation_separator", "single_space");
        let path = manifest.write(dir.path()).unwrap();

        let loaded = RunManifest::read(&path).unwrap();
        assert_eq!(loaded, manifest);
        let from_dir = RunManifest::read(dir.path()).unwrap();
        assert_eq!(from_dir, manifest);
        assert_eq!(loaded.inputs["pairs"].bytes, 6);

        // Tampered schema versions are refused.
        let mut raw: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        raw["schema_version"] = serde_json::json!(99);
        std::fs::write(&path, serde_json::to_vec(&raw).unwrap()).unwrap();
        assert!(matches!(
            RunManifest::read(&path),
            Err(Error::Manifest(_))
        ));
    }

    #[test]
    fn config_hash_is_stable() {
        let a = RunManifest::new("train", serde_json::json!({"lr": 3e-5}), 1);
        let b = RunManifest::new("train", serde_json::json!({"lr": 3e-5}), 2);
        assert_eq!(a.config_hash(), b.config_hash());
        let c = RunManifest::new("train", serde_json::json!({"lr": 1e-4}), 1);
        assert_ne!(a.config_hash(), c.config_hash());
    }
}
