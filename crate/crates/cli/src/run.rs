use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

fn digest(path: &Path, bytes: &[u8]) -> FileDigest {
    FileDigest {
        path: path.to_string_lossy().into_owned(),
        sha256: Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect(),
        bytes: bytes.len() as u64,
    }
}

/// Record of one CLI invocation, written last as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Parsed subcommand flags.
    pub config: serde_json::Value,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub out_dir: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub wall_clock_secs: f64,
}

/// Output directory bookkeeping: every file written is tracked so a failed
/// run can remove what it produced.
pub struct Run {
    out: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    manifest: RunManifest,
    start: Instant,
}

impl Run {
    pub fn start(out: &Path, command: &str, config: serde_json::Value, seed: u64, jobs: Option<usize>) -> Result<Self> {
        let created_dir = !out.exists();
        fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            created_dir,
            written: Vec::new(),
            manifest: RunManifest {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                config,
                seed,
                jobs,
                out_dir: out.to_string_lossy().into_owned(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_at: chrono::Utc::now().to_rfc3339(),
                wall_clock_secs: 0.0,
            },
            start: Instant::now(),
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.manifest.seed = seed;
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Reads an input file and records its checksum.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("read {}", path.display()))?;
        self.manifest.inputs.push(digest(path, &bytes));
        Ok(bytes)
    }

    pub fn read_input_string(&mut self, path: &Path) -> Result<String> {
        String::from_utf8(self.read_input(path)?).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(path.clone());
        fs::write(&path, bytes).with_context(|| format!("write {}", path.display()))?;
        self.manifest.outputs.push(digest(&path, bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(&mut self) -> Result<RunManifest> {
        self.manifest.wall_clock_secs = self.start.elapsed().as_secs_f64();
        let manifest = self.manifest.clone();
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = self.out.join("manifest.json");
        self.written.push(path.clone());
        fs::write(&path, text).with_context(|| format!("write {}", path.display()))?;
        Ok(manifest)
    }

    /// Removes every file this run wrote, and the output directory if the
    /// run created it and it is now empty.
    pub fn abort(self) {
        for p in self.written.iter().rev() {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = remove_empty_dirs(&self.out);
        }
    }
}

/// Removes `p` and any empty subdirectories; leaves anything else.
fn remove_empty_dirs(p: &Path) -> std::io::Result<()> {
    for entry in fs::read_dir(p)? {
        let e = entry?;
        if e.file_type()?.is_dir() {
            let _ = remove_empty_dirs(&e.path());
        }
    }
    fs::remove_dir(p)
}
