use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to reproduce one command invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub flags: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: &'static str,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut file = fs::File::open(path)
        .map_err(|e| CliError::data(format!("hashing {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| CliError::data(format!("hashing {}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn digests(paths: &[PathBuf]) -> CliResult<Vec<FileDigest>> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| CliError::data(format!("listing {}: {e}", path.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            out.extend(digests(&entries)?);
        } else {
            out.push(FileDigest {
                path: path.clone(),
                sha256: sha256_file(path)?,
            });
        }
    }
    Ok(out)
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Hashes the inputs and outputs and writes `<primary output>.manifest.json`.
pub fn write_manifest(
    command: &'static str,
    flags: &impl Serialize,
    seed: Option<u64>,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> CliResult<()> {
    let manifest = RunManifest {
        command,
        flags: serde_json::to_value(flags).map_err(|e| CliError::data(e.to_string()))?,
        seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
    };
    let path = manifest_path(&outputs[0]);
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::data(e.to_string()))?;
    fs::write(&path, text + "\n")
        .map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}
