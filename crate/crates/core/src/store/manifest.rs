//! The manifest names the committed state of a catalog: which prefix of every
//! segment is valid, the schema text, the batch registry and the reference
//! intervals. A new manifest is written to a temporary file and renamed over
//! the old one, so readers always see either the previous or the next state.
//!
//! File layout: `format u8 || body length u32 LE || JSON body || SHA-256(body)`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BatchId, StoreError};
use crate::mapping::ReferenceInterval;

pub const MANIFEST_FORMAT: u8 = 1;
pub const MANIFEST: &str = "manifest";
pub const MANIFEST_PREV: &str = "manifest.prev";
pub const MANIFEST_TMP: &str = "manifest.tmp";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentState {
    /// Committed byte length, header included.
    pub len: u64,
    pub records: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub id: BatchId,
    pub label: String,
    pub generation: u64,
    pub facts: u64,
    pub members: u64,
    pub documents: u64,
    pub links: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generation: u64,
    /// Canonical schema text, absent until the first schema install.
    pub schema: Option<String>,
    /// Relative segment path to its committed state.
    pub segments: BTreeMap<String, SegmentState>,
    pub batches: Vec<BatchEntry>,
    pub intervals: Vec<ReferenceInterval>,
}

pub enum ManifestRead {
    Ok(Manifest),
    Missing,
    Damaged(String),
}

impl Manifest {
    pub fn encode(&self) -> Vec<u8> {
        let body = serde_json::to_vec(self).expect("manifest serializes");
        let mut out = Vec::with_capacity(body.len() + 37);
        out.push(MANIFEST_FORMAT);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out.extend_from_slice(&Sha256::digest(&body));
        out
    }

    /// Format-version mismatches are hard errors; every other defect is
    /// reported as damage so the caller can fall back to the predecessor.
    pub fn decode(bytes: &[u8]) -> Result<ManifestRead, StoreError> {
        let Some((&format, rest)) = bytes.split_first() else {
            return Ok(ManifestRead::Damaged("empty manifest".into()));
        };
        if format != MANIFEST_FORMAT {
            return Err(StoreError::UnsupportedFormat {
                what: "manifest",
                found: format,
            });
        }
        if rest.len() < 4 {
            return Ok(ManifestRead::Damaged("truncated length".into()));
        }
        let len = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        let rest = &rest[4..];
        if rest.len() != len + 32 {
            return Ok(ManifestRead::Damaged(format!(
                "expected {} bytes after the header, found {}",
                len + 32,
                rest.len()
            )));
        }
        let (body, sum) = rest.split_at(len);
        if Sha256::digest(body).as_slice() != sum {
            return Ok(ManifestRead::Damaged("checksum mismatch".into()));
        }
        match serde_json::from_slice(body) {
            Ok(m) => Ok(ManifestRead::Ok(m)),
            Err(e) => Ok(ManifestRead::Damaged(format!("unreadable body: {e}"))),
        }
    }

    pub fn read(path: &Path) -> Result<ManifestRead, StoreError> {
        match fs::read(path) {
            Ok(bytes) => Self::decode(&bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ManifestRead::Missing),
            Err(e) => Err(StoreError::io(path, e)),
        }
    }

    /// Reads `manifest`, falling back to `manifest.prev` when the current one
    /// is missing or damaged. `Ok(None)` means the directory holds no catalog.
    pub fn load(root: &Path) -> Result<Option<Manifest>, StoreError> {
        let current = Self::read(&root.join(MANIFEST))?;
        let damage = match current {
            ManifestRead::Ok(m) => return Ok(Some(m)),
            ManifestRead::Missing => None,
            ManifestRead::Damaged(why) => Some(why),
        };
        match Self::read(&root.join(MANIFEST_PREV))? {
            ManifestRead::Ok(m) => Ok(Some(m)),
            ManifestRead::Missing => match damage {
                None => Ok(None),
                Some(why) => Err(StoreError::CorruptManifest(why)),
            },
            ManifestRead::Damaged(prev) => Err(StoreError::CorruptManifest(format!(
                "{}; predecessor: {prev}",
                damage.unwrap_or_else(|| "missing".into())
            ))),
        }
    }

    /// Writes and syncs `manifest.tmp`. The caller publishes it with [`publish`].
    pub fn write_tmp(&self, root: &Path) -> Result<(), StoreError> {
        let path = root.join(MANIFEST_TMP);
        let mut f = fs::File::create(&path).map_err(|e| StoreError::io(&path, e))?;
        f.write_all(&self.encode())
            .and_then(|_| f.sync_all())
            .map_err(|e| StoreError::io(&path, e))
    }
}

/// Keeps the current manifest as `manifest.prev`, then renames the temporary
/// manifest into place.
pub fn publish(root: &Path) -> Result<(), StoreError> {
    let current = root.join(MANIFEST);
    let prev = root.join(MANIFEST_PREV);
    if current.exists() {
        let staging = root.join("manifest.prev.tmp");
        fs::copy(&current, &staging).map_err(|e| StoreError::io(&staging, e))?;
        fs::rename(&staging, &prev).map_err(|e| StoreError::io(&prev, e))?;
    }
    let tmp = root.join(MANIFEST_TMP);
    fs::rename(&tmp, &current).map_err(|e| StoreError::io(&current, e))?;
    sync_dir(root);
    Ok(())
}

/// Best effort: not every platform lets a directory be opened for syncing.
pub fn sync_dir(dir: &Path) {
    if let Ok(d) = fs::File::open(dir) {
        let _ = d.sync_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        let mut m = Manifest {
            generation: 4,
            schema: Some("schema s version 1\n".into()),
            ..Manifest::default()
        };
        m.segments.insert(
            "facts/f.seg".into(),
            SegmentState {
                len: 42,
                records: 2,
            },
        );
        m
    }

    #[test]
    fn encode_decode() {
        let m = sample();
        match Manifest::decode(&m.encode()).unwrap() {
            ManifestRead::Ok(back) => assert_eq!(back, m),
            _ => panic!("expected a readable manifest"),
        }
    }

    #[test]
    fn damage_is_detected() {
        let bytes = sample().encode();
        let mut flipped = bytes.clone();
        flipped[10] ^= 0x20;
        assert!(matches!(
            Manifest::decode(&flipped).unwrap(),
            ManifestRead::Damaged(_)
        ));
        assert!(matches!(
            Manifest::decode(&bytes[..bytes.len() - 3]).unwrap(),
            ManifestRead::Damaged(_)
        ));
        let mut future = bytes;
        future[0] = 9;
        assert!(matches!(
            Manifest::decode(&future),
            Err(StoreError::UnsupportedFormat { found: 9, .. })
        ));
    }

    #[test]
    fn falls_back_to_predecessor() {
        let dir = tempfile::tempdir().unwrap();
        let old = sample();
        old.write_tmp(dir.path()).unwrap();
        publish(dir.path()).unwrap();
        let mut new = sample();
        new.generation = 5;
        new.write_tmp(dir.path()).unwrap();
        publish(dir.path()).unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap().unwrap().generation, 5);

        fs::write(dir.path().join(MANIFEST), b"\x01garbage").unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap().unwrap().generation, 4);

        fs::write(dir.path().join(MANIFEST_PREV), b"").unwrap();
        assert!(matches!(
            Manifest::load(dir.path()),
            Err(StoreError::CorruptManifest(_))
        ));
    }
}
