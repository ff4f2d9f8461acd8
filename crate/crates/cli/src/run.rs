use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bindiff_core::checkpoint::{sha256_hex, write_atomic};
use serde::Serialize;

use crate::config::RunConfig;

pub const LOCK_FILE: &str = ".bindiff.lock";

/// Exclusive claim on an output directory for the lifetime of a run.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    lock: PathBuf,
    outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_file(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(Self::of_bytes(path, &bytes))
    }

    pub fn of_bytes(path: &Path, bytes: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        }
    }
}

impl RunDir {
    pub fn claim(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "output directory {} is in use by another run (remove {} if that run is gone)",
                root.display(),
                lock.display()
            ),
            Err(e) => return Err(e).with_context(|| format!("cannot lock {}", root.display())),
        }
        Ok(Self {
            root: root.to_path_buf(),
            lock,
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Atomically writes `name` inside the directory and records its digest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        write_atomic(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(FileDigest::of_bytes(&path, bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(name, &text)
    }

    /// Writes `<command>.manifest.json`: resolved config, seeds, input and output digests.
    pub fn finish(mut self, command: &str, config: &RunConfig, inputs: Vec<FileDigest>) -> anyhow::Result<PathBuf> {
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seeds: Seeds {
                train: config.train.seed,
                sample: config.sample.config.seed,
                eval: config.eval.seed,
            },
            config,
            inputs,
            outputs: std::mem::take(&mut self.outputs),
        };
        self.write_json(&format!("{command}.manifest.json"), &manifest)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock);
    }
}

#[derive(Serialize)]
struct Seeds {
    train: u64,
    sample: u64,
    eval: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seeds: Seeds,
    config: &'a RunConfig,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunDir::claim(dir.path()).unwrap();
        assert!(RunDir::claim(dir.path()).is_err());
        drop(a);
        let mut b = RunDir::claim(dir.path()).unwrap();
        b.write("x.txt", b"hi").unwrap();
        let m = b.finish("test", &RunConfig::default(), vec![]).unwrap();
        let text = std::fs::read_to_string(m).unwrap();
        assert!(text.contains(&sha256_hex(b"hi")));
        assert!(!dir.path().join(LOCK_FILE).exists());
    }
}
