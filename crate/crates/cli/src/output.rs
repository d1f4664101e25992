//! CSV tables and the JSON summary record.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Collects written files for the manifest.
#[derive(Debug, Default, Clone, Serialize)]
pub struct Manifest {
    pub files: Vec<PathBuf>,
}

pub struct OutputDir {
    root: PathBuf,
    pub manifest: Manifest,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `name` with the given header; each row is already formatted.
    pub fn table(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let path = self.root.join(name);
        let io = |e: csv::Error| CliError::io(&path, e);
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.manifest.files.push(PathBuf::from(name));
        Ok(())
    }

    /// `index,value` table.
    pub fn indexed(&mut self, name: &str, values: &[f64]) -> Result<(), CliError> {
        self.table(
            name,
            &["index", "value"],
            values.iter().enumerate().map(|(i, v)| vec![i.to_string(), fmt_f64(*v)]),
        )
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let path = self.root.join(name);
        let text = serde_json::to_string_pretty(value).expect("json serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        self.manifest.files.push(PathBuf::from(name));
        Ok(())
    }
}

/// Hex SHA-256 over the given byte strings, length-prefixed.
pub fn content_hash<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
