//! Output files and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Config, HarnessError};

pub const MANIFEST_NAME: &str = "manifest.txt";

/// Named output files of one command.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub command: String,
    pub files: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Manifest body: tool version, command, seed, effective config and the
/// hash of every output. Contains nothing run-dependent beyond those.
pub fn manifest_text(report: &Report, cfg: &Config) -> String {
    let mut s = String::from("bnnsim run manifest\n");
    let _ = writeln!(s, "version {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "command {}", report.command);
    let _ = writeln!(s, "base_seed {}", cfg.experiment.base_seed);
    let mut files: Vec<&(String, String)> = report.files.iter().collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    s.push_str("\n[outputs]\n");
    for (name, body) in files {
        let _ = writeln!(s, "{}  {}", sha256_hex(body.as_bytes()), name);
    }
    s.push_str("\n[config]\n");
    s.push_str(&cfg.to_toml());
    s
}

/// Writes every file plus the manifest into `dir`.
pub fn emit_report(report: &Report, cfg: &Config, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    for (name, body) in &report.files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| HarnessError::io(&p, e))?;
        written.push(p);
    }
    let p = dir.join(MANIFEST_NAME);
    std::fs::write(&p, manifest_text(report, cfg)).map_err(|e| HarnessError::io(&p, e))?;
    written.push(p);
    Ok(written)
}
