use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

/// Files a stage read, with content hashes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InputManifest {
    pub inputs: Vec<ManifestEntry>,
}

impl InputManifest {
    pub fn add(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(ManifestEntry {
            path: path.to_path_buf(),
            bytes: bytes.len() as u64,
            sha256: hex_digest(&bytes),
        });
        Ok(())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    write_text(path, &(text + "\n"))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

/// Writes `resolved_config.json` and `input_manifest.json` into `out`.
pub(crate) fn write_provenance(out: &Path, cfg: &RunConfig, inputs: &InputManifest) -> Result<()> {
    write_json(&out.join("resolved_config.json"), cfg)?;
    write_json(&out.join("input_manifest.json"), inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(hex_digest(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn missing_file_is_missing_input() {
        let mut m = InputManifest::default();
        let err = m.add(Path::new("/nonexistent/x.nii")).unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
    }
}
