pub mod eval;
pub mod experiment;
pub mod phantom;
pub mod slices;
pub mod unmix;

use std::path::Path;

use anyhow::Result;
use pnmm_core::io::Manifest;

use crate::bundle::{list_files, Staging};

/// Bad command-line input detected outside the library.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Reads a TOML config file, or the defaults when no path is given.
pub fn load_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(pnmm_core::io::load_toml(p)?),
        None => Ok(T::default()),
    }
}

/// Checksums everything in the staging directory, writes the manifest and
/// moves the outputs into place.
pub fn finish(staging: Staging, mut manifest: Manifest) -> Result<()> {
    for file in list_files(staging.path())? {
        manifest.add_output(staging.path(), &file)?;
    }
    manifest.write(&staging.path().join("manifest.toml"))?;
    staging.commit()
}
