//! On-disk artifacts: model checkpoints and dataset manifests.

pub mod checkpoint;
pub mod manifest;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use manifest::{DatasetManifest, ManifestEntry, ManifestHeader};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: String,
        detail: String,
    },
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
}

/// SHA-256 hex digest of a value's canonical JSON, used to pin the
/// configuration a checkpoint or corpus was produced under.
pub fn config_digest<T: serde::Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    let hash = Sha256::digest(json.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes bytes atomically: a temp file in the same directory, synced,
/// then renamed over the destination.
pub fn atomic_write(path: &std::path::Path, bytes: &[u8]) -> Result<(), PersistError> {
    use std::io::Write;

    let io_err = |source: std::io::Error| PersistError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = path.with_extension("tmp~");
    {
        let mut file = std::fs::File::create(&tmp).map_err(io_err)?;
        file.write_all(bytes).map_err(io_err)?;
        file.sync_all().map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)?;
    if let Some(dir) = dir {
        // Renames only become durable once the directory entry is synced.
        if let Ok(d) = std::fs::File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}
