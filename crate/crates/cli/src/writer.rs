//! The single writer of a run directory and its manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use myula::io::{csv_string, encode_png, Checkpoint, GrayImage, CHECKPOINT_VERSION};
use myula::ImageField;

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub experiment: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub versions: BTreeMap<String, String>,
    pub files: BTreeMap<String, FileEntry>,
}

/// Outcome of checking a re-run against the previous manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Verification {
    /// Files whose hash was compared with the previous run.
    pub checked: usize,
    pub mismatched: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes every output of a run; records each file's hash for the manifest.
#[derive(Debug)]
pub struct RunWriter {
    root: PathBuf,
    files: BTreeMap<String, FileEntry>,
    previous: Option<Manifest>,
}

impl RunWriter {
    pub fn create(root: impl Into<PathBuf>) -> CliResult<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        let manifest_path = root.join(MANIFEST);
        let previous = match fs::read(&manifest_path) {
            Ok(bytes) => serde_json::from_slice(&bytes).ok(),
            Err(_) => None,
        };
        Ok(Self {
            root,
            files: BTreeMap::new(),
            previous,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.insert(
            rel.to_string(),
            FileEntry {
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            },
        );
        Ok(())
    }

    pub fn write_csv(
        &mut self,
        rel: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<f64>>,
    ) -> CliResult<()> {
        let text = csv_string(header, rows)?;
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("reports always serialise");
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }

    pub fn write_checkpoint(&mut self, rel: &str, ck: &Checkpoint) -> CliResult<()> {
        self.write_bytes(rel, &ck.encode()?)
    }

    /// 16-bit PGM and 8-bit PNG of `field`, both scaled from its own range.
    pub fn write_image(&mut self, stem: &str, field: &ImageField) -> CliResult<()> {
        let (lo, hi) = field.min_max();
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let pgm = GrayImage::from_field_scaled(field, lo, hi, u16::MAX)?;
        self.write_bytes(&format!("{stem}.pgm"), &pgm.encode())?;
        self.write_bytes(&format!("{stem}.png"), &encode_png(field, lo, hi)?)
    }

    /// Writes the manifest and compares hashes with the previous run of the
    /// same configuration, if any.
    pub fn finish(
        self,
        subcommand: &str,
        experiment: &str,
        config_text: &str,
        seeds: &[u64],
    ) -> CliResult<Verification> {
        let mut versions = BTreeMap::new();
        versions.insert("myula".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("checkpoint_format".into(), CHECKPOINT_VERSION.to_string());
        let manifest = Manifest {
            subcommand: subcommand.into(),
            experiment: experiment.into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seeds: seeds.to_vec(),
            versions,
            files: self.files,
        };
        let mut verification = Verification::default();
        if let Some(prev) = &self.previous {
            if prev.config_sha256 == manifest.config_sha256
                && prev.subcommand == manifest.subcommand
            {
                for (path, entry) in &prev.files {
                    if let Some(now) = manifest.files.get(path) {
                        verification.checked += 1;
                        if now != entry {
                            verification.mismatched.push(path.clone());
                        }
                    }
                }
            }
        }
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
        bytes.push(b'\n');
        let path = self.root.join(MANIFEST);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        if let Some(first) = verification.mismatched.first() {
            return Err(CliError::Determinism {
                path: first.clone(),
            });
        }
        Ok(verification)
    }
}

/// Reads a manifest and re-hashes every listed file.
pub fn verify_directory(root: &Path) -> CliResult<Verification> {
    let path = root.join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Core(myula::Error::Format(format!("manifest: {e}"))))?;
    let mut v = Verification::default();
    for (rel, entry) in &manifest.files {
        v.checked += 1;
        match fs::read(root.join(rel)) {
            Ok(b) if sha256_hex(&b) == entry.sha256 => {}
            _ => v.mismatched.push(rel.clone()),
        }
    }
    Ok(v)
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
    fn manifest_lists_files_and_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RunWriter::create(dir.path()).unwrap();
        w.write_csv("a/b.csv", &["x"], vec![vec![1.0]]).unwrap();
        w.write_json("r.json", &vec![1, 2]).unwrap();
        assert_eq!(
            w.finish("sample", "deconv_tv", "cfg", &[1])
                .unwrap()
                .checked,
            0
        );
        let v = verify_directory(dir.path()).unwrap();
        assert_eq!((v.checked, v.mismatched.len()), (2, 0));

        // identical re-run verifies
        let mut w = RunWriter::create(dir.path()).unwrap();
        w.write_csv("a/b.csv", &["x"], vec![vec![1.0]]).unwrap();
        w.write_json("r.json", &vec![1, 2]).unwrap();
        assert_eq!(
            w.finish("sample", "deconv_tv", "cfg", &[1])
                .unwrap()
                .checked,
            2
        );

        // a changed output under the same config is reported
        let mut w = RunWriter::create(dir.path()).unwrap();
        w.write_csv("a/b.csv", &["x"], vec![vec![2.0]]).unwrap();
        let err = w.finish("sample", "deconv_tv", "cfg", &[1]).unwrap_err();
        assert!(matches!(err, CliError::Determinism { ref path } if path == "a/b.csv"));

        // a different config is not compared
        let mut w = RunWriter::create(dir.path()).unwrap();
        w.write_csv("a/b.csv", &["x"], vec![vec![3.0]]).unwrap();
        assert_eq!(
            w.finish("sample", "deconv_tv", "other", &[1])
                .unwrap()
                .checked,
            0
        );

        fs::write(dir.path().join("a/b.csv"), "tampered").unwrap();
        assert_eq!(
            verify_directory(dir.path()).unwrap().mismatched,
            vec!["a/b.csv".to_string()]
        );
    }
}
