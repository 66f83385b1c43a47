//! Output directories: files are staged next to the target and moved in only when the
//! command succeeds, together with the run's config and a JSON log.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::TempDir;
use textcause::splitter::LockState;
use textcause::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize)]
struct Digest256 {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Log<'a> {
    command: &'a str,
    version: &'a str,
    started_at: &'a str,
    finished_at: String,
    config_digest: String,
    inputs: &'a [Digest256],
    outputs: Vec<Digest256>,
    lock_state: LockState,
    warnings: &'a [String],
    summary: &'a serde_json::Value,
}

pub struct Run {
    command: &'static str,
    out: PathBuf,
    staging: TempDir,
    config: String,
    started_at: String,
    inputs: Vec<Digest256>,
    files: Vec<String>,
    warnings: Vec<String>,
    pub lock_state: LockState,
    pub summary: serde_json::Value,
}

impl Run {
    pub fn new(command: &'static str, out: &Path, config: String) -> Result<Self> {
        let parent = out
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new("."));
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let staging = tempfile::Builder::new()
            .prefix(".textcause-staging-")
            .tempdir_in(parent)
            .map_err(|e| Error::io(parent, e))?;
        Ok(Run {
            command,
            out: out.to_path_buf(),
            staging,
            config,
            started_at: chrono::Utc::now().to_rfc3339(),
            inputs: Vec::new(),
            files: Vec::new(),
            warnings: Vec::new(),
            lock_state: LockState::NotApplicable,
            summary: serde_json::Value::Null,
        })
    }

    pub fn config(&self) -> &str {
        &self.config
    }

    /// Records the digest of an input file.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(Digest256 {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    /// Staging path for an output file.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.staging.path().join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.file(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.file(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    /// Writes the config and log, then moves everything into the output directory.
    pub fn commit(mut self) -> Result<PathBuf> {
        let config = self.config.clone();
        self.write_text("run_config.txt", &config)?;
        let outputs = self
            .files
            .iter()
            .map(|f| {
                Ok(Digest256 {
                    path: f.clone(),
                    sha256: file_digest(&self.staging.path().join(f))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let log = Log {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            started_at: &self.started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            config_digest: sha256_hex(config.as_bytes()),
            inputs: &self.inputs,
            outputs,
            lock_state: self.lock_state,
            warnings: &self.warnings,
            summary: &self.summary,
        };
        let mut text = serde_json::to_string_pretty(&log)?;
        text.push('\n');
        let log_path = self.staging.path().join("log.json");
        fs::write(&log_path, text).map_err(|e| Error::io(&log_path, e))?;
        self.files.push("log.json".into());

        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        for f in &self.files {
            let to = self.out.join(f);
            fs::rename(self.staging.path().join(f), &to).map_err(|e| Error::io(&to, e))?;
        }
        Ok(self.out)
    }
}
