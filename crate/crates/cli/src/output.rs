//! Atomic file writes and the sha256 manifest of a run directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FORMAT: &str = "refscore-run";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub files: Vec<ManifestEntry>,
}

/// A file in a run directory that is missing or does not match the manifest.
#[derive(Debug)]
pub struct IntegrityError {
    pub file: String,
    pub problem: String,
}

impl std::fmt::Display for IntegrityError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "integrity check failed for {}: {}", self.file, self.problem)
    }
}

impl std::error::Error for IntegrityError {}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Write every file, then the manifest covering them.
pub fn write_run_dir(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> Result<Manifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut entries = Vec::new();
    for (name, bytes) in files {
        write_atomic(&dir.join(name), bytes)?;
        entries.push(ManifestEntry {
            name: name.clone(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        version: MANIFEST_VERSION,
        files: entries,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_atomic(&dir.join(refscore::pipeline::MANIFEST_FILE), &bytes)?;
    Ok(manifest)
}

/// Read the manifest and check every listed file against it.
pub fn verify_run_dir(dir: &Path) -> Result<Manifest> {
    let name = refscore::pipeline::MANIFEST_FILE;
    let bytes = fs::read(dir.join(name)).map_err(|e| IntegrityError {
        file: name.to_string(),
        problem: e.to_string(),
    })?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| IntegrityError {
        file: name.to_string(),
        problem: e.to_string(),
    })?;
    if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
        return Err(IntegrityError {
            file: name.to_string(),
            problem: format!("unsupported manifest {} v{}", manifest.format, manifest.version),
        }
        .into());
    }
    for e in &manifest.files {
        let data = fs::read(dir.join(&e.name)).map_err(|err| IntegrityError {
            file: e.name.clone(),
            problem: err.to_string(),
        })?;
        if data.len() as u64 != e.bytes || sha256_hex(&data) != e.sha256 {
            return Err(IntegrityError {
                file: e.name.clone(),
                problem: format!("expected {} bytes with sha256 {}, found {} bytes", e.bytes, e.sha256, data.len()),
            }
            .into());
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn truncation_is_detected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let mut files = BTreeMap::new();
        files.insert("a.json".to_string(), b"{\"x\": 1}\n".to_vec());
        files.insert("b.csv".to_string(), b"x\n1\n".to_vec());
        write_run_dir(dir.path(), &files).unwrap();
        verify_run_dir(dir.path()).unwrap();

        fs::write(dir.path().join("a.json"), b"{\"x\"").unwrap();
        let err = verify_run_dir(dir.path()).unwrap_err();
        let integrity = err.downcast_ref::<IntegrityError>().unwrap();
        assert_eq!(integrity.file, "a.json");
    }
}
