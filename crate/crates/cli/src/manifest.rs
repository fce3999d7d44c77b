use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Content hash of a file in the style of a git blob object, over SHA-256:
/// `sha256("blob <len>\0" ++ bytes)`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("{:x}", h.finalize())
}

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub blob_sha256: String,
}

/// Record written next to every run's outputs. Feeding it back through
/// `--config` repeats the run.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: RunConfig,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<String>,
}

/// Collects output files under one directory and finishes with the manifest.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
    inputs: Vec<InputHash>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            inputs: Vec::new(),
        })
    }

    /// Reads an input file, recording its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputHash {
            path: path.to_path_buf(),
            blob_sha256: blob_hash(&bytes),
        });
        Ok(bytes)
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.file(name)?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let mut w = self.file(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Opens a file for callers that stream their own format.
    pub fn raw(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.file(name)
    }

    pub fn finish(mut self, command: &str, config: RunConfig) -> Result<PathBuf> {
        let manifest = Manifest {
            tool: "ldvote",
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config,
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.written),
        };
        let name = format!("{command}.manifest.json");
        let path = self.dir.join(&name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_sha256_objects() {
        // `printf abc | git hash-object --stdin` in a sha256 repository
        assert_eq!(
            blob_hash(b"abc"),
            "c1cf6e465077930e88dc5136641d402f72a229ddd996f627d60e9639eaba35a6"
        );
    }
}
