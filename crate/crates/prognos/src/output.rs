//! Output directories: one writer at a time, and a manifest that fixes the
//! configuration digest and the digest of every file written.

use std::fs::{self, OpenOptions};
use std::io::ErrorKind as IoKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{CliError, CliResult};

pub const LOCK: &str = ".prognos.lock";
pub const MANIFEST: &str = "manifest.toml";

/// Exclusive handle on an output directory; the lock file is removed on drop.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    lock: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::from(e).at(root))?;
        let lock = root.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == IoKind::AlreadyExists => {
                return Err(CliError::usage(format!(
                    "{} exists: another run is writing here (remove it if that run died)",
                    lock.display()
                )))
            }
            Err(e) => return Err(CliError::from(e).at(&lock)),
        }
        Ok(Self { root: root.to_path_buf(), lock, files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Records a file written under the root for the manifest.
    pub fn record(&mut self, name: impl Into<String>) {
        let name = name.into();
        if !self.files.contains(&name) {
            self.files.push(name);
        }
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::from(e).at(&p))?;
        self.record(name);
        Ok(())
    }

    /// Writes `manifest.toml`. It holds no paths or timestamps, so equal
    /// inputs give an identical manifest.
    pub fn finish(mut self, command: &str, config_digest: &str) -> CliResult<Manifest> {
        self.files.sort();
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let p = self.path(name);
            let bytes = fs::read(&p).map_err(|e| CliError::from(e).at(&p))?;
            files.push(FileDigest { name: name.clone(), sha256: hex(&Sha256::digest(&bytes)) });
        }
        let manifest = Manifest {
            format: "prognos-manifest v1".into(),
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_digest: config_digest.into(),
            files,
        };
        let text = toml::to_string(&manifest).expect("manifest serializes");
        let p = self.path(MANIFEST);
        fs::write(&p, text).map_err(|e| CliError::from(e).at(&p))?;
        Ok(manifest)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub command: String,
    pub version: String,
    pub config_digest: String,
    pub files: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

impl Manifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::from(e).at(path))?;
        toml::from_str(&text).map_err(|e| CliError::data(e.message().to_string()).at(path))
    }

    /// Digest over all file digests.
    pub fn result_digest(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.files {
            h.update(f.name.as_bytes());
            h.update([0]);
            h.update(f.sha256.as_bytes());
            h.update([0]);
        }
        hex(&h.finalize())
    }
}
