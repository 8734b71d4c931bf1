//! Output directory bookkeeping and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Serialize)]
struct OutputFile {
    file: String,
    bytes: usize,
    sha256: String,
}

/// Writes files under one directory and remembers their hashes.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
    timings: Vec<(String, f64)>,
    started: Instant,
    stage: Instant,
}

impl Outputs {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let now = Instant::now();
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            timings: Vec::new(),
            started: now,
            stage: now,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        log::debug!("wrote {}", path.display());
        self.files.retain(|f| f.file != name);
        self.files.push(OutputFile {
            file: name.to_string(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("json serialises");
        text.push('\n');
        self.write(name, &text)
    }

    /// Closes the current timing stage.
    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings
            .push((stage.to_string(), (now - self.stage).as_secs_f64()));
        self.stage = now;
    }

    /// Writes `manifest.json`; it is not listed in itself.
    pub fn finish(self, command: &str, config: &ExperimentConfig, status: &str) -> CliResult<()> {
        let timings: serde_json::Map<String, serde_json::Value> = self
            .timings
            .iter()
            .map(|(k, v)| (k.clone(), json!(v)))
            .collect();
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "format_version": kickflow::io::FORMAT_VERSION,
            "status": status,
            "args": std::env::args().skip(1).collect::<Vec<_>>(),
            "config": config,
            "config_sha256": config.fingerprint(),
            "kick_seed": config.kick_seed(),
            "timings_s": timings,
            "wall_clock_s": self.started.elapsed().as_secs_f64(),
            "outputs": self.files,
        });
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("json serialises");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
