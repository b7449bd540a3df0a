//! Output files and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use surrosens_core::dml::REPORT_SCHEMA_VERSION;

use crate::error::{CliError, CliResult};

/// A named output file held in memory until the run succeeds.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Artifact { name: name.into(), bytes }
    }

    pub fn json<T: Serialize>(name: impl Into<String>, value: &T) -> CliResult<Self> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        bytes.push(b'\n');
        Ok(Artifact::new(name, bytes))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("output");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::writing(path, e)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub report_schema_version: u32,
    pub seed: u64,
    pub config_digest: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// SHA-256 over the config digest and every input digest.
    pub run_digest: String,
    /// The resolved configuration the run used.
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(
        command: &str,
        seed: u64,
        config_digest: String,
        config: serde_json::Value,
        inputs: Vec<FileDigest>,
        outputs: &[Artifact],
    ) -> Self {
        let mut h = Sha256::new();
        h.update(config_digest.as_bytes());
        for i in &inputs {
            h.update(i.sha256.as_bytes());
        }
        Manifest {
            tool: "surrosens".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            report_schema_version: REPORT_SCHEMA_VERSION,
            seed,
            config_digest,
            run_digest: hex::encode(h.finalize()),
            inputs,
            outputs: outputs.iter().map(|a| FileDigest { path: a.name.clone(), sha256: sha256_hex(&a.bytes) }).collect(),
            config,
        }
    }
}

/// Writes every artifact, then the manifest, into `dir`.
pub fn publish(dir: &Path, artifacts: &[Artifact], manifest: &Manifest) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::writing(dir, e))?;
    let mut written = Vec::with_capacity(artifacts.len() + 1);
    for a in artifacts {
        let path = dir.join(&a.name);
        write_atomic(&path, &a.bytes)?;
        written.push(path);
    }
    let m = Artifact::json("manifest.json", manifest)?;
    let path = dir.join(&m.name);
    write_atomic(&path, &m.bytes)?;
    written.push(path);
    Ok(written)
}
