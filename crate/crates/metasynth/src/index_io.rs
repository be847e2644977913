//! Index files and a shared, swappable index snapshot.
//!
//! An index file is JSON lines: a header `{format, version, dim, unit,
//! count}`, one line per entry, and a footer `{sha256}` holding the digest of
//! every byte before it. Floats are written in shortest round-trip form, so a
//! loaded index answers every query exactly as the saved one did.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, PoisonError, RwLock};

use metasynth_core::index::{IndexEntry, IndexError, UpsertReport, VectorIndex};
use metasynth_core::MeasureUnit;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus_io::{write_atomic, IoError};

pub const INDEX_FORMAT: &str = "metasynth-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dim: usize,
    unit: MeasureUnit,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Footer {
    sha256: String,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexFileError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{}: corrupt index file: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },
    #[error("{}: index file version {found} is not supported (expected {INDEX_VERSION})", path.display())]
    Version { path: PathBuf, found: u32 },
    #[error("{}: {source}", path.display())]
    Index {
        path: PathBuf,
        #[source]
        source: IndexError,
    },
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn persist(index: &VectorIndex, path: &Path) -> Result<(), IoError> {
    let mut body = Vec::new();
    let header = Header {
        format: INDEX_FORMAT.into(),
        version: INDEX_VERSION,
        dim: index.dim(),
        unit: index.unit(),
        count: index.len(),
    };
    let result: io::Result<()> = (|| {
        push_line(&mut body, &header)?;
        for e in index.entries() {
            push_line(&mut body, e)?;
        }
        let footer = Footer {
            sha256: sha256_hex(&body),
        };
        push_line(&mut body, &footer)
    })();
    result.map_err(|e| IoError::io(path, e))?;
    write_atomic(path, |w| w.write_all(&body))
}

fn push_line<T: Serialize>(buf: &mut Vec<u8>, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *buf, value).map_err(io::Error::other)?;
    buf.push(b'\n');
    Ok(())
}

pub fn load_index(path: &Path) -> Result<VectorIndex, IndexFileError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    let corrupt = |reason: String| IndexFileError::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    if !bytes.ends_with(b"\n") {
        return Err(corrupt("missing final newline (truncated?)".into()));
    }
    let body_end = bytes[..bytes.len() - 1]
        .iter()
        .rposition(|&b| b == b'\n')
        .map_or(0, |i| i + 1);
    let footer: Footer = serde_json::from_slice(&bytes[body_end..])
        .map_err(|e| corrupt(format!("unreadable footer: {e}")))?;
    let actual = sha256_hex(&bytes[..body_end]);
    if actual != footer.sha256 {
        return Err(corrupt(format!("digest mismatch: footer {}, content {actual}", footer.sha256)));
    }

    let text = std::str::from_utf8(&bytes[..body_end]).map_err(|e| corrupt(e.to_string()))?;
    let mut lines = text.lines();
    let header: Header = lines
        .next()
        .ok_or_else(|| corrupt("missing header".into()))
        .and_then(|l| serde_json::from_str(l).map_err(|e| corrupt(format!("unreadable header: {e}"))))?;
    if header.format != INDEX_FORMAT {
        return Err(corrupt(format!("unexpected format tag {:?}", header.format)));
    }
    if header.version != INDEX_VERSION {
        return Err(IndexFileError::Version {
            path: path.to_path_buf(),
            found: header.version,
        });
    }
    let entries = lines
        .enumerate()
        .map(|(i, l)| serde_json::from_str::<IndexEntry>(l).map_err(|e| corrupt(format!("entry {}: {e}", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    if entries.len() != header.count {
        return Err(corrupt(format!("header promises {} entries, found {}", header.count, entries.len())));
    }
    let wrap = |source| IndexFileError::Index {
        path: path.to_path_buf(),
        source,
    };
    let mut index = VectorIndex::new(header.dim, header.unit).map_err(wrap)?;
    index.upsert(entries).map_err(wrap)?;
    if index.len() != header.count {
        return Err(corrupt("duplicate chunk ids".into()));
    }
    Ok(index)
}

/// An index shared by many readers. Writers build a new snapshot and swap it
/// in, so a search never sees a half-applied batch.
#[derive(Debug)]
pub struct IndexHandle {
    current: RwLock<Arc<VectorIndex>>,
    writer: std::sync::Mutex<()>,
}

impl IndexHandle {
    pub fn new(index: VectorIndex) -> Self {
        IndexHandle {
            current: RwLock::new(Arc::new(index)),
            writer: std::sync::Mutex::new(()),
        }
    }

    pub fn snapshot(&self) -> Arc<VectorIndex> {
        self.current.read().unwrap_or_else(PoisonError::into_inner).clone()
    }

    pub fn upsert(&self, batch: Vec<IndexEntry>) -> Result<UpsertReport, IndexError> {
        let _guard = self.writer.lock().unwrap_or_else(PoisonError::into_inner);
        let mut next = (*self.snapshot()).clone();
        let report = next.upsert(batch)?;
        *self.current.write().unwrap_or_else(PoisonError::into_inner) = Arc::new(next);
        Ok(report)
    }
}
