use std::path::{Path, PathBuf};

use ocean_gnn::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance written next to every artifact.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(skip)]
    pending: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            pending: Vec::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: digest_path(path, None)?,
        });
        Ok(self)
    }

    /// Outputs are digested when the manifest is written.
    pub fn output(mut self, path: &Path) -> Self {
        self.pending.push(path.to_path_buf());
        self
    }

    /// The manifest file itself is excluded from directory digests.
    pub fn write(mut self, path: &Path) -> Result<()> {
        for p in std::mem::take(&mut self.pending) {
            self.outputs.push(FileDigest {
                path: p.display().to_string(),
                sha256: digest_path(&p, Some(path))?,
            });
        }
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text).map_err(|e| io_err(path, e))
    }
}

fn files_under(root: &Path, skip: Option<&Path>, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(root).map_err(|e| io_err(root, e))?;
    for e in entries {
        let p = e.map_err(|e| io_err(root, e))?.path();
        if p.is_dir() {
            files_under(&p, skip, out)?;
        } else if skip != Some(p.as_path()) {
            out.push(p);
        }
    }
    Ok(())
}

/// SHA-256 of a file, or of a directory's relative paths and contents in
/// sorted order, leaving out `skip`.
pub fn digest_path(path: &Path, skip: Option<&Path>) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        files_under(path, skip, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0u8]);
            h.update(std::fs::read(&f).map_err(|e| io_err(&f, e))?);
        }
    } else {
        h.update(std::fs::read(path).map_err(|e| io_err(path, e))?);
    }
    Ok(hex::encode(h.finalize()))
}
