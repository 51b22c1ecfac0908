use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one invocation: what was run, on what input, and what it wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: Option<String>,
    pub config_sha256: Option<String>,
    pub out_dir: String,
    pub seed: Option<u64>,
    pub args: Vec<String>,
    pub generated_unix_s: u64,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files as a command writes them.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.retain(|f| f.path != rel);
        self.written.push(FileEntry {
            path: rel.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len() as u64,
        });
        Ok(path)
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.written
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self, subcommand: &str, config: Option<&Path>, seed: Option<u64>) -> Result<RunManifest> {
        let config_sha256 = match config {
            Some(p) => Some(sha256_hex(
                &std::fs::read(p).with_context(|| format!("reading {}", p.display()))?,
            )),
            None => None,
        };
        self.written.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            tool: "qkdnet".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config: config.map(|p| p.display().to_string()),
            config_sha256,
            out_dir: self.root.display().to_string(),
            seed,
            args: std::env::args().collect(),
            generated_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            files: self.written,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        let path = self.root.join(MANIFEST_FILE);
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}
