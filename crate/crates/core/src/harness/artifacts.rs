use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Every file a command wrote (besides the manifest itself), sorted by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn get(&self, name: &str) -> Option<&ArtifactEntry> {
        self.files.iter().find(|e| e.name == name)
    }

    /// Re-hashes every listed file under `dir` and reports the first mismatch.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for entry in &self.files {
            let path = dir.join(&entry.name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if sha256_hex(&bytes) != entry.sha256 {
                return Err(Error::Usage(format!("digest mismatch for {}", entry.name)));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// In-memory outputs, flushed to disk in one pass.
#[derive(Debug, Default)]
pub(crate) struct ArtifactSet {
    files: Vec<(String, Vec<u8>)>,
}

impl ArtifactSet {
    pub(crate) fn add(&mut self, name: String, contents: String) {
        self.files.push((name, contents.into_bytes()));
    }

    /// Writes every file plus `manifest.json` into `dir`. If any write
    /// fails, the files written so far (and `dir`, if this call created it)
    /// are removed.
    pub(crate) fn write(mut self, dir: &Path) -> Result<Manifest> {
        self.files.sort_by(|a, b| a.0.cmp(&b.0));
        let manifest = Manifest {
            files: self
                .files
                .iter()
                .map(|(name, bytes)| ArtifactEntry {
                    name: name.clone(),
                    bytes: bytes.len(),
                    sha256: sha256_hex(bytes),
                })
                .collect(),
        };
        let manifest_text = serde_json::to_string_pretty(&manifest)? + "\n";
        self.files
            .push((MANIFEST_FILE.to_string(), manifest_text.into_bytes()));

        let created = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = std::fs::write(&path, bytes) {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                if created {
                    let _ = std::fs::remove_dir(dir);
                }
                return Err(Error::io(&path, e));
            }
            written.push(path);
        }
        Ok(manifest)
    }
}
