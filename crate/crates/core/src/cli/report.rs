use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{write_json, RunConfig};

pub const REPORT_FILE: &str = "report.json";

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Summary of one successful command, written as `report.json` in the
/// output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    /// SHA-256 of the effective configuration as TOML.
    pub config_digest: String,
    pub seed: u64,
    pub jobs: usize,
    pub timing_ms: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
    /// Scalar results such as final loss or mean recall.
    pub metrics: BTreeMap<String, f64>,
    pub outputs: Vec<OutputFile>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunReport {
    pub fn new(command: &str, cfg: &RunConfig, out_dir: &Path) -> Result<Self> {
        Ok(Self {
            command: command.to_owned(),
            config_digest: digest_bytes(cfg.to_toml()?.as_bytes()),
            seed: cfg.seed,
            jobs: 1,
            timing_ms: BTreeMap::new(),
            counts: BTreeMap::new(),
            metrics: BTreeMap::new(),
            outputs: Vec::new(),
            out_dir: out_dir.to_owned(),
        })
    }

    pub fn time(&mut self, stage: &str, ms: f64) {
        *self.timing_ms.entry(stage.to_owned()).or_default() += ms;
    }

    pub fn count(&mut self, name: &str, n: usize) {
        self.counts.insert(name.to_owned(), n as u64);
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_owned(), value);
    }

    /// Hashes a file already written under the output directory.
    pub fn record(&mut self, rel: &str) -> Result<()> {
        let path = self.out_dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(OutputFile {
            path: rel.replace('\\', "/"),
            bytes: bytes.len() as u64,
            sha256: digest_bytes(&bytes),
        });
        Ok(())
    }

    pub fn output(&self, rel: &str) -> Option<&OutputFile> {
        self.outputs.iter().find(|o| o.path == rel)
    }

    pub fn write(&self) -> Result<()> {
        write_json(&self.out_dir.join(REPORT_FILE), self)
    }

    /// One-paragraph human summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}: {} outputs in {}",
            self.command,
            self.outputs.len(),
            self.out_dir.display()
        );
        for (k, v) in &self.counts {
            let _ = write!(s, "\n  {k}: {v}");
        }
        for (k, v) in &self.metrics {
            let _ = write!(s, "\n  {k}: {v:.6}");
        }
        for (k, v) in &self.timing_ms {
            let _ = write!(s, "\n  {k}: {v:.1} ms");
        }
        s
    }
}
