//! Durable persistence.
//!
//! Layout of a [`FileStore`] root:
//!
//! ```text
//! experiments/<id>.json      participants/<id>.json   researchers/<id>.json
//! tag_maps/<id>.json         invitations/<id>.json    pictures/<id>.json
//! events-<experiment_id>.log one JSON tag event per line, append-only
//! blobs/<sha256-hex>         image bytes
//! blobs/<sha256-hex>.meta    one JSON upload record per line
//! ```
//!
//! Entity documents carry a `version` field and are replaced atomically
//! (write to a temp file, then rename). Event logs are only ever appended to;
//! on open, a trailing line without its newline is the remnant of an
//! interrupted append and is truncated away.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{GeoPoint, TagEvent};

/// Current entity document schema version.
pub const DOCUMENT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("storage is full")]
    StorageFull,
    #[error("I/O error: {0}")]
    Io(#[source] io::Error),
    #[error("cannot serialize record: {0}")]
    Serialization(String),
    #[error("corrupt record in {path} at line {line}: {message}")]
    CorruptRecord {
        path: String,
        line: usize,
        message: String,
    },
    #[error("blob {0} not found")]
    BlobNotFound(String),
    #[error("blob {0} does not match its content hash")]
    BlobCorrupt(String),
    #[error("'{0}' is not a valid storage identifier")]
    InvalidId(String),
    #[error("store is read-only")]
    ReadOnly,
}

impl From<io::Error> for StorageError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::StorageFull {
            StorageError::StorageFull
        } else {
            StorageError::Io(e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Experiment,
    Participant,
    Researcher,
    TagMap,
    Invitation,
    Picture,
}

impl EntityKind {
    pub fn dir_name(&self) -> &'static str {
        match self {
            EntityKind::Experiment => "experiments",
            EntityKind::Participant => "participants",
            EntityKind::Researcher => "researchers",
            EntityKind::TagMap => "tag_maps",
            EntityKind::Invitation => "invitations",
            EntityKind::Picture => "pictures",
        }
    }
}

/// Sidecar record written for every upload of a blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobMeta {
    pub media_type: String,
    pub uploader: Option<String>,
    pub experiment_id: String,
    pub picture_id: String,
    pub location: Option<GeoPoint>,
    pub uploaded_at: DateTime<Utc>,
}

/// Identifiers double as file names, so they are restricted to a safe alphabet.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

fn check_id(id: &str) -> Result<(), StorageError> {
    if is_valid_id(id) {
        Ok(())
    } else {
        Err(StorageError::InvalidId(id.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Persistence backend used by the platform.
pub trait Store: Send + Sync {
    /// Creates or replaces an entity document. A `version` field is added.
    fn put_document(&self, kind: EntityKind, id: &str, doc: &Value) -> Result<(), StorageError>;

    fn get_document(&self, kind: EntityKind, id: &str) -> Result<Option<Value>, StorageError>;

    /// All documents of a kind, ordered by id.
    fn documents(&self, kind: EntityKind) -> Result<Vec<Value>, StorageError>;

    /// Appends one event; durable when this returns.
    fn append_event(&self, experiment_id: &str, event: &TagEvent) -> Result<(), StorageError>;

    /// Every event recorded for an experiment, in append order.
    fn events(&self, experiment_id: &str) -> Result<Vec<TagEvent>, StorageError>;

    /// Stores bytes under their SHA-256 and records `meta`. Idempotent in the bytes.
    fn put_blob(&self, bytes: &[u8], meta: &BlobMeta) -> Result<String, StorageError>;

    fn get_blob(&self, blob_id: &str) -> Result<Vec<u8>, StorageError>;

    fn blob_metadata(&self, blob_id: &str) -> Result<Vec<BlobMeta>, StorageError>;
}

fn with_version(doc: &Value) -> Value {
    let mut doc = doc.clone();
    if let Value::Object(map) = &mut doc {
        map.insert("version".into(), Value::from(DOCUMENT_VERSION));
    }
    doc
}

fn event_line(event: &TagEvent) -> Result<String, StorageError> {
    let mut line =
        serde_json::to_string(event).map_err(|e| StorageError::Serialization(e.to_string()))?;
    // serde_json escapes control characters, so this cannot happen for valid JSON
    if line.contains('\n') {
        return Err(StorageError::Serialization("record spans lines".into()));
    }
    line.push('\n');
    Ok(line)
}

fn parse_event_lines(text: &str, path: &str) -> Result<Vec<TagEvent>, StorageError> {
    text.split_terminator('\n')
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| StorageError::CorruptRecord {
                path: path.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// File-system store. See the module docs for the layout.
#[derive(Debug)]
pub struct FileStore {
    root: PathBuf,
    read_only: bool,
    logs: Mutex<HashMap<String, File>>,
}

impl FileStore {
    /// Opens (creating if needed) a writable store.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        fs::create_dir_all(root.join("blobs"))?;
        Ok(Self {
            root,
            read_only: false,
            logs: Mutex::new(HashMap::new()),
        })
    }

    /// Opens an existing store for reading only. Interrupted appends are
    /// skipped rather than repaired, so this is safe next to a live writer.
    pub fn open_read_only(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(StorageError::Io(io::Error::new(
                io::ErrorKind::NotFound,
                format!("store root {} does not exist", root.display()),
            )));
        }
        Ok(Self {
            root,
            read_only: true,
            logs: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn event_log_path(&self, experiment_id: &str) -> PathBuf {
        self.root.join(format!("events-{experiment_id}.log"))
    }

    fn blob_path(&self, blob_id: &str) -> PathBuf {
        self.root.join("blobs").join(blob_id)
    }

    fn meta_path(&self, blob_id: &str) -> PathBuf {
        self.root.join("blobs").join(format!("{blob_id}.meta"))
    }

    fn writable(&self) -> Result<(), StorageError> {
        if self.read_only {
            Err(StorageError::ReadOnly)
        } else {
            Ok(())
        }
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StorageError> {
        let dir = path.parent().expect("store paths have a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".tmp-{}", uuid::Uuid::new_v4().simple()));
        let result = (|| {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        Ok(result?)
    }

    fn append_line(file: &mut File, line: &[u8]) -> Result<(), StorageError> {
        let before = file.metadata()?.len();
        let result = file.write_all(line).and_then(|_| file.sync_data());
        if let Err(e) = result {
            // never leave a partial line in front of later appends
            let _ = file.set_len(before);
            return Err(e.into());
        }
        Ok(())
    }
}

impl Store for FileStore {
    fn put_document(&self, kind: EntityKind, id: &str, doc: &Value) -> Result<(), StorageError> {
        self.writable()?;
        check_id(id)?;
        let bytes = serde_json::to_vec_pretty(&with_version(doc))
            .map_err(|e| StorageError::Serialization(e.to_string()))?;
        let path = self.root.join(kind.dir_name()).join(format!("{id}.json"));
        self.write_atomic(&path, &bytes)
    }

    fn get_document(&self, kind: EntityKind, id: &str) -> Result<Option<Value>, StorageError> {
        check_id(id)?;
        let path = self.root.join(kind.dir_name()).join(format!("{id}.json"));
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| {
                StorageError::CorruptRecord {
                    path: path.display().to_string(),
                    line: e.line(),
                    message: e.to_string(),
                }
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn documents(&self, kind: EntityKind) -> Result<Vec<Value>, StorageError> {
        let dir = self.root.join(kind.dir_name());
        let entries = match fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name.strip_suffix(".json") {
                if is_valid_id(id) {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        ids.iter()
            .filter_map(|id| self.get_document(kind, id).transpose())
            .collect()
    }

    fn append_event(&self, experiment_id: &str, event: &TagEvent) -> Result<(), StorageError> {
        self.writable()?;
        check_id(experiment_id)?;
        let line = event_line(event)?;
        let mut logs = self.logs.lock().unwrap_or_else(|p| p.into_inner());
        if !logs.contains_key(experiment_id) {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.event_log_path(experiment_id))?;
            logs.insert(experiment_id.to_string(), file);
        }
        let file = logs.get_mut(experiment_id).expect("inserted above");
        Self::append_line(file, line.as_bytes())
    }

    fn events(&self, experiment_id: &str) -> Result<Vec<TagEvent>, StorageError> {
        check_id(experiment_id)?;
        let path = self.event_log_path(experiment_id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let complete = bytes
            .iter()
            .rposition(|b| *b == b'\n')
            .map(|i| i + 1)
            .unwrap_or(0);
        if complete < bytes.len() && !self.read_only {
            let _logs = self.logs.lock().unwrap_or_else(|p| p.into_inner());
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(complete as u64)?;
            f.sync_all()?;
        }
        let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| {
            StorageError::CorruptRecord {
                path: path.display().to_string(),
                line: bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1,
                message: "invalid UTF-8".into(),
            }
        })?;
        parse_event_lines(text, &path.display().to_string())
    }

    fn put_blob(&self, bytes: &[u8], meta: &BlobMeta) -> Result<String, StorageError> {
        self.writable()?;
        let id = sha256_hex(bytes);
        let path = self.blob_path(&id);
        if !path.exists() {
            // concurrent writers of the same bytes race benignly on rename
            self.write_atomic(&path, bytes)?;
        }
        let mut line = serde_json::to_string(meta)
            .map_err(|e| StorageError::Serialization(e.to_string()))?;
        line.push('\n');
        let _logs = self.logs.lock().unwrap_or_else(|p| p.into_inner());
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.meta_path(&id))?;
        Self::append_line(&mut f, line.as_bytes())?;
        Ok(id)
    }

    fn get_blob(&self, blob_id: &str) -> Result<Vec<u8>, StorageError> {
        check_id(blob_id)?;
        let bytes = match fs::read(self.blob_path(blob_id)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StorageError::BlobNotFound(blob_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        if sha256_hex(&bytes) != blob_id {
            return Err(StorageError::BlobCorrupt(blob_id.to_string()));
        }
        Ok(bytes)
    }

    fn blob_metadata(&self, blob_id: &str) -> Result<Vec<BlobMeta>, StorageError> {
        check_id(blob_id)?;
        let path = self.meta_path(blob_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        text.lines()
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| StorageError::CorruptRecord {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

/// Volatile store for tests and embedding.
#[derive(Debug, Default)]
pub struct MemoryStore {
    inner: Mutex<MemoryInner>,
}

#[derive(Debug, Default)]
struct MemoryInner {
    documents: HashMap<&'static str, BTreeMap<String, Value>>,
    // events are kept serialized so both backends share one encoding
    logs: HashMap<String, String>,
    blobs: HashMap<String, Vec<u8>>,
    meta: HashMap<String, Vec<BlobMeta>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, MemoryInner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Store for MemoryStore {
    fn put_document(&self, kind: EntityKind, id: &str, doc: &Value) -> Result<(), StorageError> {
        check_id(id)?;
        self.lock()
            .documents
            .entry(kind.dir_name())
            .or_default()
            .insert(id.to_string(), with_version(doc));
        Ok(())
    }

    fn get_document(&self, kind: EntityKind, id: &str) -> Result<Option<Value>, StorageError> {
        Ok(self
            .lock()
            .documents
            .get(kind.dir_name())
            .and_then(|m| m.get(id))
            .cloned())
    }

    fn documents(&self, kind: EntityKind) -> Result<Vec<Value>, StorageError> {
        Ok(self
            .lock()
            .documents
            .get(kind.dir_name())
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default())
    }

    fn append_event(&self, experiment_id: &str, event: &TagEvent) -> Result<(), StorageError> {
        check_id(experiment_id)?;
        let line = event_line(event)?;
        self.lock()
            .logs
            .entry(experiment_id.to_string())
            .or_default()
            .push_str(&line);
        Ok(())
    }

    fn events(&self, experiment_id: &str) -> Result<Vec<TagEvent>, StorageError> {
        let inner = self.lock();
        let text = inner.logs.get(experiment_id).map(String::as_str).unwrap_or("");
        parse_event_lines(text, experiment_id)
    }

    fn put_blob(&self, bytes: &[u8], meta: &BlobMeta) -> Result<String, StorageError> {
        let id = sha256_hex(bytes);
        let mut inner = self.lock();
        inner.blobs.entry(id.clone()).or_insert_with(|| bytes.to_vec());
        inner.meta.entry(id.clone()).or_default().push(meta.clone());
        Ok(id)
    }

    fn get_blob(&self, blob_id: &str) -> Result<Vec<u8>, StorageError> {
        self.lock()
            .blobs
            .get(blob_id)
            .cloned()
            .ok_or_else(|| StorageError::BlobNotFound(blob_id.to_string()))
    }

    fn blob_metadata(&self, blob_id: &str) -> Result<Vec<BlobMeta>, StorageError> {
        Ok(self.lock().meta.get(blob_id).cloned().unwrap_or_default())
    }
}
