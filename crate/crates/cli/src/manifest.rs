//! Run manifests: the resolved command and configuration plus content
//! digests of every input and output, enough to replay a run.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cli::Command;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: RunConfig,
    /// Absolute or caller-relative input paths.
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

pub fn digest_inputs(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    let mut v = paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: path_string(p),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    v.sort_by(|a, b| a.path.cmp(&b.path));
    v.dedup_by(|a, b| a.path == b.path);
    Ok(v)
}

pub fn digest_outputs(out: &Path, paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    let mut v = paths
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(out).unwrap_or(p);
            Ok(FileDigest {
                path: path_string(rel),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    v.sort_by(|a, b| a.path.cmp(&b.path));
    v.dedup_by(|a, b| a.path == b.path);
    Ok(v)
}

impl Manifest {
    pub fn new(command: Command, config: RunConfig, inputs: &[PathBuf], out: &Path, outputs: &[PathBuf]) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config,
            inputs: digest_inputs(inputs)?,
            outputs: digest_outputs(out, outputs)?,
        })
    }

    /// Input files whose current content differs from the recorded digest.
    pub fn changed_inputs(&self) -> Result<Vec<String>> {
        let mut changed = Vec::new();
        for d in &self.inputs {
            let p = Path::new(&d.path);
            if !p.exists() {
                return Err(CliError::MissingInput(d.path.clone()));
            }
            if sha256_file(p)? != d.sha256 {
                changed.push(d.path.clone());
            }
        }
        Ok(changed)
    }
}
