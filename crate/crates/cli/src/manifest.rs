//! Run manifests and content hashes.

use std::fs;
use std::path::Path;

use bggan::synth::{read_manifest, MANIFEST_FILE};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const RUN_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    /// As given on the command line.
    pub path: String,
    pub sha256: String,
}

/// Written into the output directory by every command. Holds no
/// timestamps, so identical runs produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub dataset: Option<FileRef>,
    /// Other consumed files (checkpoints, split files, grids).
    pub inputs: Vec<FileRef>,
    /// Produced files, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> CliResult<()> {
        let path = out.join(RUN_MANIFEST);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn read(out: &Path) -> CliResult<Self> {
        let path = out.join(RUN_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn file_ref(path: &Path) -> CliResult<FileRef> {
    Ok(FileRef { path: path.display().to_string(), sha256: file_sha256(path)? })
}

/// Hash over the named files of `dir`, in order, each prefixed by its
/// name. Independent of where the directory lives.
pub fn files_sha256(dir: &Path, names: &[String]) -> CliResult<String> {
    let mut h = Sha256::new();
    for name in names {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Hash over the dataset manifest and every file it lists, in manifest
/// order.
pub fn dataset_sha256(dir: &Path) -> CliResult<String> {
    let manifest = read_manifest(dir)?;
    let mut names = vec![MANIFEST_FILE.to_string()];
    for s in &manifest.subjects {
        names.push(s.sc.clone());
        names.push(s.fc.clone());
        names.extend(s.feats.iter().cloned());
    }
    files_sha256(dir, &names)
}

pub fn dataset_ref(dir: &Path) -> CliResult<FileRef> {
    Ok(FileRef { path: dir.display().to_string(), sha256: dataset_sha256(dir)? })
}

/// Recomputes the dataset hash recorded in a run manifest.
pub fn verify_dataset(run: &RunManifest, base: &Path) -> CliResult<bool> {
    match &run.dataset {
        Some(d) => Ok(dataset_sha256(&base.join(&d.path))? == d.sha256),
        None => Ok(true),
    }
}
