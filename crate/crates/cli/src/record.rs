use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::commands::Command;
use crate::CliError;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub subcommand: String,
    pub command: Command,
    /// Resolved model configuration, when the subcommand uses one.
    pub config: Option<Value>,
    /// Contents of every input file, keyed by the flag that named it.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub workers: usize,
    pub version: String,
    pub duration_secs: f64,
    pub outputs: Value,
}

impl RunRecord {
    pub fn append(&self, path: &Path) -> Result<(), CliError> {
        let line = serde_json::to_string(self).map_err(|e| CliError::Input(e.to_string()))?;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::Input(format!("cannot open run log {}: {e}", path.display())))?;
        writeln!(f, "{line}").map_err(|e| CliError::Input(e.to_string()))?;
        Ok(())
    }

    pub fn read_all(path: &Path) -> Result<Vec<RunRecord>, CliError> {
        let f = std::fs::File::open(path)
            .map_err(|e| CliError::Input(format!("cannot read run log {}: {e}", path.display())))?;
        let mut out = Vec::new();
        for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| CliError::Input(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(&line)
                    .map_err(|e| CliError::Input(format!("run log line {}: {e}", i + 1)))?,
            );
        }
        Ok(out)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}
