use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

/// Relative output paths are placed under this directory when it is set.
pub const OUTPUT_DIR_ENV: &str = "CROWD_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Where an artifact goes and in which format.
#[derive(Debug, Clone)]
pub struct Target {
    pub path: Option<PathBuf>,
    pub format: Format,
}

impl Target {
    pub fn new(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self { path: None, format: Format::Json });
        };
        let format = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            _ => return Err(Failure::Usage(format!("output `{}` must end in .csv or .json", path.display()))),
        };
        Ok(Self { path: Some(resolve(path)), format })
    }
}

/// Applies the output-directory override to a relative path.
pub fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes the bytes and returns the location reported in summaries.
pub fn emit(target: &Target, bytes: &[u8]) -> anyhow::Result<String> {
    match &target.path {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
            Ok(path.display().to_string())
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok("stdout".into())
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn new(role: &str, path: impl Into<String>, bytes: &[u8]) -> Self {
        Self { role: role.into(), path: path.into(), sha256: sha256_hex(bytes) }
    }
}

/// Everything needed to regenerate an artifact.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Arguments that reproduce the run, without `--manifest` and `--threads`.
    pub args: Vec<String>,
    pub settings: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub output: FileDigest,
}

/// Drops the flags that do not influence the artifact.
pub fn reproducible_args(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip_value = false;
    for arg in argv.iter().skip(1) {
        if skip_value {
            skip_value = false;
            continue;
        }
        if arg == "--manifest" || arg == "--threads" {
            skip_value = true;
        } else if !(arg.starts_with("--manifest=") || arg.starts_with("--threads=")) {
            out.push(arg.clone());
        }
    }
    out
}
