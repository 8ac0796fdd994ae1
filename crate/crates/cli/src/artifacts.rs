//! Artifact persistence: CSV tables, JSON manifests, hash chaining.
//!
//! Every command writes its outputs plus a `manifest.json` naming the
//! resolved configuration (echoed verbatim and hashed) and every input and
//! output file by SHA-256. Downstream commands refuse inputs whose recorded
//! hashes do not match the files on disk or whose configuration hash
//! differs from their own. Floats print in shortest round-trip form, so
//! write, read, and write again is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Provenance record accompanying every command's outputs.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    /// Subcommand that produced the outputs.
    pub command: String,
    /// SHA-256 of the canonical configuration echo.
    pub config_sha256: String,
    /// The canonical configuration echo itself.
    pub config: String,
    /// Input artifacts by repository-relative path -> SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output artifacts by file name -> SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// SHA-256 of a byte slice, lowercase hex.
pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// One command's output directory with hash bookkeeping.
pub struct OutputDir {
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl OutputDir {
    /// Creates (or reuses) the subdirectory `name` under `out`.
    pub fn create(out: &Path, name: &str) -> Result<Self, CliError> {
        let dir = out.join(name);
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputDir {
            dir,
            outputs: BTreeMap::new(),
        })
    }

    /// Writes one file and records its hash for the manifest.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
        self.outputs
            .insert(name.to_string(), sha256_bytes(contents.as_bytes()));
        Ok(())
    }

    /// Writes a file that carries measurements (wall times); hashed like any
    /// output but named so determinism checks can skip it.
    pub fn write_timings(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    /// Finalizes the directory with its manifest.
    pub fn finish(
        self,
        command: &str,
        config_sha256: &str,
        config_echo: &str,
        inputs: BTreeMap<String, String>,
    ) -> Result<(), CliError> {
        let manifest = Manifest {
            command: command.to_string(),
            config_sha256: config_sha256.to_string(),
            config: config_echo.to_string(),
            inputs,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::config(format!("cannot encode manifest: {e}")))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// Upstream artifact directory opened for reading, with tamper checks.
pub struct InputDir {
    dir: PathBuf,
    manifest: Manifest,
    /// Hashes of the files actually consumed, for the downstream manifest.
    used: BTreeMap<String, String>,
    name: String,
}

impl InputDir {
    /// Opens `out/name`, requiring a manifest stamped with the same
    /// configuration hash.
    pub fn open(out: &Path, name: &str, config_sha256: &str) -> Result<Self, CliError> {
        let dir = out.join(name);
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| {
            CliError::config(format!(
                "missing upstream artifacts: cannot read {}: {e}",
                path.display()
            ))
        })?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("corrupt manifest {}: {e}", path.display())))?;
        if manifest.config_sha256 != config_sha256 {
            return Err(CliError::config(format!(
                "configuration hash mismatch: {} was produced under {}, current configuration is {}; \
                 rerun the upstream command",
                name, manifest.config_sha256, config_sha256
            )));
        }
        Ok(InputDir {
            dir,
            manifest,
            used: BTreeMap::new(),
            name: name.to_string(),
        })
    }

    /// Reads one recorded file, verifying its hash against the manifest.
    pub fn read(&mut self, file: &str) -> Result<String, CliError> {
        let recorded = self.manifest.outputs.get(file).ok_or_else(|| {
            CliError::config(format!(
                "{}/manifest.json does not list {file}",
                self.name
            ))
        })?;
        let path = self.dir.join(file);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let actual = sha256_bytes(text.as_bytes());
        if &actual != recorded {
            return Err(CliError::config(format!(
                "{} does not match its manifest hash (expected {recorded}, found {actual}); \
                 the artifact was modified after it was written",
                path.display()
            )));
        }
        self.used
            .insert(format!("{}/{file}", self.name), actual);
        Ok(text)
    }

    /// Hashes of everything read so far, keyed by `dir/file`.
    pub fn consumed(&self) -> BTreeMap<String, String> {
        self.used.clone()
    }
}

/// Renders a CSV table; every row must match the header width.
pub fn csv_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let mut first = true;
        for value in row {
            if !first {
                text.push(',');
            }
            first = false;
            write!(text, "{value}").unwrap();
        }
        text.push('\n');
    }
    text
}

/// Parses a CSV table produced by [`csv_table`].
pub fn parse_csv(text: &str, context: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::config(format!("{context}: empty CSV")))?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.parse::<f64>().map_err(|e| {
                    CliError::config(format!("{context}: row {}: bad number {cell:?}: {e}", k + 1))
                })
            })
            .collect::<Result<Vec<f64>, CliError>>()?;
        if row.len() != header.len() {
            return Err(CliError::config(format!(
                "{context}: row {} has {} cells, header has {}",
                k + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_byte_identically() {
        let header = ["time", "value"];
        let rows = vec![
            vec![0.0, 0.8],
            vec![0.1, 1.0 / 3.0],
            vec![1e-300, 123456.789012345],
        ];
        let text = csv_table(&header, &rows);
        let (parsed_header, parsed_rows) = parse_csv(&text, "test").unwrap();
        assert_eq!(parsed_header, vec!["time", "value"]);
        for (a, b) in rows.iter().flatten().zip(parsed_rows.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let rewritten = csv_table(&header, &parsed_rows);
        assert_eq!(text, rewritten);
    }

    #[test]
    fn tampered_artifacts_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path();
        let mut dir = OutputDir::create(out, "snapshots").unwrap();
        dir.write("xt.csv", "time,total_moisture\n0,0.8\n").unwrap();
        dir.finish("simulate", "cafe", "echo", BTreeMap::new())
            .unwrap();

        let mut ok = InputDir::open(out, "snapshots", "cafe").unwrap();
        assert!(ok.read("xt.csv").is_ok());
        assert_eq!(ok.consumed().len(), 1);

        assert!(InputDir::open(out, "snapshots", "beef").is_err());

        fs::write(out.join("snapshots/xt.csv"), "time,total_moisture\n0,0.9\n").unwrap();
        let mut tampered = InputDir::open(out, "snapshots", "cafe").unwrap();
        assert!(tampered.read("xt.csv").is_err());

        let mut missing = InputDir::open(out, "snapshots", "cafe").unwrap();
        assert!(missing.read("absent.csv").is_err());
    }
}
