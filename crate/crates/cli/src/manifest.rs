//! Run directories, atomic writes and the run manifest.

use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub arguments: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the run directory.
    pub outputs: Vec<FileDigest>,
    pub started: String,
    pub finished: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Current time, or `SOURCE_DATE_EPOCH` when set so that manifests of
/// reproducible runs are byte-identical too.
pub fn now() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
        .unwrap_or_else(Utc::now)
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Output directory of one command invocation.
#[derive(Debug)]
pub struct RunDir {
    pub root: PathBuf,
    command: String,
    arguments: Vec<String>,
    started: DateTime<Utc>,
    outputs: Vec<FileDigest>,
}

impl RunDir {
    /// Use `out` if given, else `<runs>/<command>-<timestamp>` where `runs`
    /// is `GRIDCAST_RUNS_DIR` or `./runs`.
    pub fn create(out: Option<&Path>, command: &str, arguments: Vec<String>) -> Result<Self, CliError> {
        let started = now();
        let root = match out {
            Some(p) => p.to_path_buf(),
            None => {
                let base = std::env::var_os("GRIDCAST_RUNS_DIR")
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("runs"));
                base.join(format!("{command}-{}", started.format("%Y%m%dT%H%M%SZ")))
            }
        };
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self {
            root,
            command: command.to_string(),
            arguments,
            started,
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    /// Atomically write `relative` (sub-directories are created) and
    /// record its digest.
    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        write_atomic(&path, bytes)?;
        self.outputs.push(FileDigest {
            path: relative.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Record a file some other writer produced inside the run directory.
    pub fn record(&mut self, relative: &str) -> Result<(), CliError> {
        let path = self.path(relative);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(FileDigest {
            path: relative.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn finish(
        mut self,
        config_hash: Option<String>,
        seeds: Vec<u64>,
        threads: usize,
        inputs: Vec<FileDigest>,
    ) -> Result<PathBuf, CliError> {
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            arguments: self.arguments.clone(),
            config_hash,
            seeds,
            threads,
            inputs,
            outputs: self.outputs.clone(),
            started: stamp(self.started),
            finished: stamp(now()),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.path(MANIFEST_FILE);
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}
