//! Run manifest: the command, the fully materialized configuration, input
//! digests, tool version and wall time.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const FILE_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Input {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest: Header,
    #[serde(default)]
    pub inputs: Vec<Input>,
    pub config: RunConfig,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Input {
    pub fn new(role: &str, path: &Path) -> Result<Self, CliError> {
        let abs = std::fs::canonicalize(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            role: role.into(),
            sha256: sha256_file(&abs)?,
            path: abs,
        })
    }

    /// Fails when the file changed since the manifest was written.
    pub fn verify(&self) -> Result<(), CliError> {
        let now = sha256_file(&self.path)?;
        if now != self.sha256 {
            return Err(CliError::Validation(format!(
                "input {} ({}) changed: sha256 {} != recorded {}",
                self.role,
                self.path.display(),
                now,
                self.sha256
            )));
        }
        Ok(())
    }
}

impl Manifest {
    pub fn input(&self, role: &str) -> Result<&Input, CliError> {
        self.inputs
            .iter()
            .find(|i| i.role == role)
            .ok_or_else(|| CliError::Validation(format!("manifest has no {role} input")))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(dir.join(FILE_NAME), text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))
    }
}
