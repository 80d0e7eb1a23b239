//! CSV and manifest writing shared by every subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// 17 significant digits, enough to round-trip an `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Optional value; censored or missing entries are written as `NA`.
pub fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for c in cells {
            if !first {
                self.text.push(',');
            }
            first = false;
            self.text.push_str(c.as_ref());
        }
        self.text.push('\n');
    }

    pub fn line(&mut self, line: &str) {
        let _ = writeln!(self.text, "{line}");
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub version: &'static str,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

/// Collects the files of one run and finishes with its manifest.
pub struct Artifacts {
    dir: PathBuf,
    command: String,
    config: Option<(String, String)>,
    seed: Option<u64>,
    outputs: Vec<String>,
    started: Instant,
}

impl Artifacts {
    pub fn new(dir: &Path, command: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config: None,
            seed: None,
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn config(&mut self, path: &Path, contents: &str) {
        let digest = hex::encode(Sha256::digest(contents.as_bytes()));
        self.config = Some((path.display().to_string(), digest));
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf, CliError> {
        let (config_path, config_sha256) = match self.config {
            Some((p, h)) => (Some(p), Some(h)),
            None => (None, None),
        };
        let manifest = RunManifest {
            command: self.command,
            config_path,
            config_sha256,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
