//! Run manifest: settings snapshot, input and output digests, phase timings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Files in an output directory that are not part of the run's results.
pub const EXCLUDED: &[&str] = &[MANIFEST_FILE, "checkpoint.bin"];

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub seed: Option<u64>,
    pub parallelism: usize,
    pub config: serde_json::Value,
    /// path → SHA-256, recorded before any computation.
    pub inputs: BTreeMap<String, String>,
    /// path relative to the output directory → SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Seconds per phase, in run order.
    pub timings: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Files directly inside `dir`, sorted by name.
fn dir_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, parallelism: usize, config: impl Serialize) -> Self {
        Self {
            command: command.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            parallelism,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Digests a file, or every file directly inside a directory.
    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        if path.is_dir() {
            for f in dir_files(path)? {
                self.inputs.insert(f.display().to_string(), sha256_file(&f)?);
            }
        } else {
            self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        }
        Ok(())
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push((phase.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    /// Digests every result file under `out` and writes the manifest
    /// through a temporary file and a rename.
    pub fn finish(mut self, out: &Path) -> Result<(), CliError> {
        self.outputs.clear();
        collect_outputs(out, out, &mut self.outputs)?;
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Io(e.to_string()))?;
        let tmp = out.join(format!("{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, text + "\n")?;
        std::fs::rename(&tmp, out.join(MANIFEST_FILE))?;
        Ok(())
    }
}

fn collect_outputs(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        let rel = p.strip_prefix(root).expect("inside root").to_string_lossy().replace('\\', "/");
        if p.is_dir() {
            collect_outputs(root, &p, out)?;
        } else if !EXCLUDED.contains(&rel.as_str()) && !rel.ends_with(".tmp") {
            out.insert(rel, sha256_file(&p)?);
        }
    }
    Ok(())
}
