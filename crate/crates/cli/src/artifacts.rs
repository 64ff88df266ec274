//! Stage artifacts: JSON files that carry the hash of the configuration
//! that produced them.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct Envelope<T> {
    pub kind: String,
    pub version: u32,
    pub config_hash: String,
    pub data: T,
}

/// Writes `data` wrapped in an envelope; creates parent directories.
pub fn write<T: Serialize>(path: &Path, kind: &str, config_hash: &str, data: &T) -> Result<(), CliError> {
    let env = Envelope {
        kind: kind.to_string(),
        version: FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        data,
    };
    let mut bytes = serde_json::to_vec_pretty(&env).map_err(CliError::failed)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::failed(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::failed(format!("{}: {e}", path.display())))
}

/// Reads an artifact written by `stage`, refusing other kinds, versions and
/// configuration hashes.
pub fn read<T: DeserializeOwned>(
    path: &Path,
    kind: &str,
    config_hash: &str,
    stage: &'static str,
) -> Result<T, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::MissingArtifact {
                path: path.to_path_buf(),
                stage,
            })
        }
        Err(e) => return Err(CliError::failed(format!("{}: {e}", path.display()))),
    };
    let env: Envelope<T> =
        serde_json::from_str(&text).map_err(|e| CliError::failed(format!("{}: {e}", path.display())))?;
    if env.kind != kind || env.version != FORMAT_VERSION {
        return Err(CliError::failed(format!(
            "{}: expected a version {FORMAT_VERSION} `{kind}` artifact, found version {} `{}`",
            path.display(),
            env.version,
            env.kind
        )));
    }
    if env.config_hash != config_hash {
        return Err(CliError::StaleArtifact {
            path: PathBuf::from(path),
            found: env.config_hash,
            expected: config_hash.to_string(),
            stage,
        });
    }
    Ok(env.data)
}

pub fn policy_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("policy_{name}.json"))
}

pub fn qtable_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("qtable_{name}.json"))
}
