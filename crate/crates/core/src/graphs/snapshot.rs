//! Versioned snapshot files with a content hash checked on load.
//!
//! Layout: one JSON header line, then the JSON body on the second line. The
//! hash is the SHA-256 of the body bytes exactly as written.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT: &str = "toolrec-snapshot";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Run settings that produced a snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `body` and returns its content hash.
pub fn save<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<String> {
    save_with(path, kind, body, None)
}

pub fn save_with<T: Serialize>(path: &Path, kind: &str, body: &T, provenance: Option<&Provenance>) -> Result<String> {
    let body = serde_json::to_vec(body)?;
    let header = SnapshotHeader {
        format: FORMAT.into(),
        version: VERSION,
        kind: kind.into(),
        content_hash: sha256_hex(&body),
        provenance: provenance.cloned(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.extend_from_slice(&body);
    out.push(b'\n');
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(header.content_hash)
}

/// Reads only the header line.
pub fn read_header(path: &Path) -> Result<SnapshotHeader> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let end = raw.iter().position(|b| *b == b'\n').unwrap_or(raw.len());
    serde_json::from_slice(&raw[..end]).map_err(|e| Error::Snapshot {
        path: path.to_owned(),
        reason: format!("bad header: {e}"),
    })
}

/// Loads a snapshot of `kind`, returning the body and its verified hash.
pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(T, String)> {
    let bad = |reason: String| Error::Snapshot {
        path: path.to_owned(),
        reason,
    };
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = raw
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header: SnapshotHeader =
        serde_json::from_slice(&raw[..split]).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad(format!("unsupported format {} v{}", header.format, header.version)));
    }
    if header.kind != kind {
        return Err(bad(format!("expected a {kind} snapshot, found {}", header.kind)));
    }
    let mut body = &raw[split + 1..];
    if body.last() == Some(&b'\n') {
        body = &body[..body.len() - 1];
    }
    let actual = sha256_hex(body);
    if actual != header.content_hash {
        return Err(bad(format!(
            "content hash mismatch (header {}, actual {actual})",
            header.content_hash
        )));
    }
    let value = serde_json::from_slice(body).map_err(|e| bad(format!("bad body: {e}")))?;
    Ok((value, actual))
}
