//! Reading and writing corpora and chunk dumps.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use metasynth_core::{ChunkSet, Corpus, CorpusError, MetaRecord, SupportAbstract};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Default separator between support abstracts in the CSV layout.
pub const DEFAULT_CSV_SEPARATOR: &str = "<SEP>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
    Csv,
}

impl CorpusFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusFormat::Jsonl => "jsonl",
            CorpusFormat::Csv => "csv",
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?} (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
}

impl IoError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// True when the file itself could not be found.
    pub fn is_not_found(&self) -> bool {
        matches!(self, IoError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound)
    }
}

/// Parses every non-blank line of a JSON-lines file.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IoError::parse(path, i + 1, e.to_string()))?;
        out.push(value);
    }
    Ok(out)
}

/// Writes `items` one per line, replacing the file atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, &item).map_err(io::Error::other)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
        w.write_all(b"\n")
    })
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), IoError>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        fill(&mut w)?;
        let file = w.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        IoError::io(path, e)
    })
}

/// Loads and validates a corpus. The corpus is named after the file stem.
pub fn load_corpus(path: &Path, format: CorpusFormat, separator: &str) -> Result<Corpus, IoError> {
    let records = match format {
        CorpusFormat::Jsonl => read_jsonl::<MetaRecord>(path)?,
        CorpusFormat::Csv => read_csv(path, separator)?,
    };
    for r in &records {
        r.validate().map_err(|source| IoError::Invalid {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let name = path.file_stem().map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned());
    Corpus::new(name, records).map_err(|source| IoError::Invalid {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<(), IoError> {
    write_jsonl(path, corpus.records())
}

#[derive(Deserialize)]
struct CsvRow {
    #[serde(default)]
    id: Option<String>,
    meta_abstract: String,
    support_abstracts: String,
}

/// Two-column layout: `meta_abstract` and `support_abstracts`, the latter
/// holding every support abstract joined by `separator`. An optional `id`
/// column names the record; otherwise rows are numbered.
fn read_csv(path: &Path, separator: &str) -> Result<Vec<MetaRecord>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(file);
    let headers = reader.headers().map_err(|e| IoError::parse(path, 1, e.to_string()))?;
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    for column in ["meta_abstract", "support_abstracts"] {
        if !headers.iter().any(|h| h == column) {
            return Err(IoError::parse(path, 1, format!("missing column {column:?}")));
        }
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(i + 2, |p| p.line() as usize);
            IoError::parse(path, line, e.to_string())
        })?;
        let supports = row
            .support_abstracts
            .split(separator)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .enumerate()
            .map(|(j, text)| SupportAbstract {
                id: format!("s{}", j + 1),
                text: text.to_string(),
            })
            .collect();
        out.push(MetaRecord {
            id: row.id.unwrap_or_else(|| format!("row{}", i + 1)),
            meta_abstract: row.meta_abstract,
            supports,
            source_tag: None,
        });
    }
    Ok(out)
}

/// One line per chunk set.
pub fn save_chunks(path: &Path, sets: &[ChunkSet]) -> Result<(), IoError> {
    write_jsonl(path, sets)
}

pub fn load_chunks(path: &Path) -> Result<Vec<ChunkSet>, IoError> {
    read_jsonl(path)
}
