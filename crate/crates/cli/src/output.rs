//! Output directory: atomic file writes and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use afc_core::table::Table;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedEntry {
    pub run: String,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config_path: Option<String>,
    pub resolved_config: serde_json::Value,
    pub seeds: Vec<SeedEntry>,
    pub outputs: Vec<OutputFile>,
    pub warnings: Vec<String>,
    pub wall_clock_s: f64,
}

/// Writes files into one directory and records each for the manifest.
pub struct OutputDir {
    root: PathBuf,
    format: Format,
    files: Vec<OutputFile>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Write to a sibling temporary file, then rename over the target.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

impl OutputDir {
    pub fn create(root: PathBuf, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(&root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(OutputDir {
            root,
            format,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.root.join(rel), bytes)?;
        self.files.push(OutputFile {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes `stem.csv` or `stem.json` depending on the chosen format.
    pub fn write_table(&mut self, stem: &str, table: &Table) -> Result<(), CliError> {
        match self.format {
            Format::Csv => self.write_bytes(&format!("{stem}.csv"), table.to_csv().as_bytes()),
            Format::Json => {
                let text = serde_json::to_string_pretty(&table.to_json())
                    .expect("tables serialize")
                    + "\n";
                self.write_bytes(&format!("{stem}.json"), text.as_bytes())
            }
        }
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("results serialize") + "\n";
        self.write_bytes(rel, text.as_bytes())
    }

    /// Writes `manifest.json` last.
    pub fn finish(self, mut manifest: RunManifest, started: Instant) -> Result<PathBuf, CliError> {
        manifest.outputs = self.files;
        manifest.wall_clock_s = started.elapsed().as_secs_f64();
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_are_recorded_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path().join("run"), Format::Csv).unwrap();
        out.write_bytes("a/b.txt", b"abc").unwrap();
        assert_eq!(fs::read(dir.path().join("run/a/b.txt")).unwrap(), b"abc");
        assert_eq!(
            out.files[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(!dir.path().join("run/a/.b.txt.tmp").exists());
    }
}
