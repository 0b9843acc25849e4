use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{config_hash, sha256_file, to_toml_string, write_atomic};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to replay a run: tool version, arguments, the full
/// resolved configuration and the seed, plus checksums of what was written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub arguments: Vec<String>,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub parallel: bool,
    pub outputs: Vec<OutputEntry>,
    pub config: toml::Table,
}

impl Manifest {
    pub fn new<T: Serialize>(
        command: &str,
        arguments: Vec<String>,
        config: &T,
        seed: Option<u64>,
    ) -> Result<Self> {
        let table = toml::Table::try_from(config).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            tool: "pnmm".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            arguments,
            config_hash: config_hash(config)?,
            seed,
            parallel: crate::par::is_parallel(),
            outputs: Vec::new(),
            config: table,
        })
    }

    /// Records `dir/file` with its checksum.
    pub fn add_output(&mut self, dir: &Path, file: &str) -> Result<()> {
        let sha256 = sha256_file(&dir.join(file))?;
        self.outputs.push(OutputEntry {
            file: file.into(),
            sha256,
        });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, to_toml_string(self)?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        crate::io::load_toml(path)
    }
}
