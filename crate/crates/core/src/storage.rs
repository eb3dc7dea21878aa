//! Append-only session log.
//!
//! Layout: the 6-byte magic `GWLOG1`, then records of
//!
//! ```text
//! u32 LE payload length | u8 record type | payload | u32 LE CRC32(payload)
//! ```
//!
//! where the payload is the JSON form of the record. A truncated final
//! record (a torn write) is ignored on recovery; a checksum mismatch or an
//! unknown record type anywhere is corruption.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detect::CustomDetector;
use crate::error::{Error, Result};
use crate::history::ActionLogEntry;
use crate::session::SessionConfig;
use crate::store::DatasetSnapshot;
use crate::wrangle::CustomWrangler;

pub const MAGIC: &[u8; 6] = b"GWLOG1";
const HEADER: usize = 5;
const TRAILER: usize = 4;

/// Full dataset image taken at ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub source_sha256: String,
    pub delimiter: char,
    pub config: SessionConfig,
    pub dataset: DatasetSnapshot,
}

/// Undo or redo of the entry with this sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub seq: u64,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRegistration {
    pub detector: CustomDetector,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WranglerRegistration {
    pub wrangler: CustomWrangler,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Baseline(Box<Baseline>),
    Action(ActionLogEntry),
    Undo(Marker),
    Redo(Marker),
    Detector(DetectorRegistration),
    Wrangler(WranglerRegistration),
}

impl LogRecord {
    pub fn type_byte(&self) -> u8 {
        match self {
            LogRecord::Baseline(_) => 1,
            LogRecord::Action(_) => 2,
            LogRecord::Undo(_) => 3,
            LogRecord::Redo(_) => 4,
            LogRecord::Detector(_) => 5,
            LogRecord::Wrangler(_) => 6,
        }
    }

    fn payload(&self) -> Vec<u8> {
        let r = match self {
            LogRecord::Baseline(b) => serde_json::to_vec(b),
            LogRecord::Action(e) => serde_json::to_vec(e),
            LogRecord::Undo(m) | LogRecord::Redo(m) => serde_json::to_vec(m),
            LogRecord::Detector(d) => serde_json::to_vec(d),
            LogRecord::Wrangler(w) => serde_json::to_vec(w),
        };
        r.expect("log records serialize")
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let payload = self.payload();
        let len = u32::try_from(payload.len()).expect("record under 4 GiB");
        out.extend_from_slice(&len.to_le_bytes());
        out.push(self.type_byte());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    }

    fn decode(kind: u8, payload: &[u8], at: usize) -> Result<LogRecord> {
        fn parse<T: DeserializeOwned>(p: &[u8], at: usize) -> Result<T> {
            serde_json::from_slice(p).map_err(|e| Error::CorruptLog(format!("record at byte {at}: {e}")))
        }
        Ok(match kind {
            1 => LogRecord::Baseline(Box::new(parse(payload, at)?)),
            2 => LogRecord::Action(parse(payload, at)?),
            3 => LogRecord::Undo(parse(payload, at)?),
            4 => LogRecord::Redo(parse(payload, at)?),
            5 => LogRecord::Detector(parse(payload, at)?),
            6 => LogRecord::Wrangler(parse(payload, at)?),
            other => return Err(Error::CorruptLog(format!("unknown record type {other} at byte {at}"))),
        })
    }
}

/// Decoded log plus the byte length of its intact prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedLog {
    pub records: Vec<LogRecord>,
    pub valid_len: usize,
    pub torn_tail: bool,
}

pub fn decode_log(bytes: &[u8]) -> Result<DecodedLog> {
    if bytes.len() < MAGIC.len() {
        if MAGIC.starts_with(bytes) {
            return Ok(DecodedLog {
                records: Vec::new(),
                valid_len: 0,
                torn_tail: !bytes.is_empty(),
            });
        }
        return Err(Error::CorruptLog("bad magic".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::CorruptLog("bad magic".into()));
    }
    let mut pos = MAGIC.len();
    let mut records = Vec::new();
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        if rest.len() < HEADER {
            break;
        }
        let len = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        let total = HEADER + len + TRAILER;
        if rest.len() < total {
            break;
        }
        let payload = &rest[HEADER..HEADER + len];
        let crc = u32::from_le_bytes(rest[HEADER + len..total].try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != crc {
            return Err(Error::CorruptLog(format!("checksum mismatch at byte {pos}")));
        }
        records.push(LogRecord::decode(rest[4], payload, pos)?);
        pos += total;
    }
    Ok(DecodedLog {
        records,
        valid_len: pos,
        torn_tail: pos < bytes.len(),
    })
}

/// Durable byte sink for the session log.
pub trait LogStorage: Send + Sync {
    /// Appends all of `bytes` or nothing.
    fn append(&mut self, bytes: &[u8]) -> Result<()>;
    fn read_all(&self) -> Result<Vec<u8>>;
    fn len(&self) -> u64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// In-memory storage. Clones share the same bytes, so a test can keep a
/// handle, drop the session and recover from what was persisted.
#[derive(Debug, Clone, Default)]
pub struct MemoryStorage {
    bytes: Arc<Mutex<Vec<u8>>>,
    failures: Arc<AtomicUsize>,
}

impl MemoryStorage {
    pub fn new() -> MemoryStorage {
        MemoryStorage::default()
    }

    pub fn from_bytes(bytes: Vec<u8>) -> MemoryStorage {
        MemoryStorage {
            bytes: Arc::new(Mutex::new(bytes)),
            failures: Arc::default(),
        }
    }

    /// Makes the next `n` appends fail.
    pub fn fail_next(&self, n: usize) {
        self.failures.store(n, Ordering::SeqCst);
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.bytes.lock().expect("storage lock").clone()
    }
}

impl LogStorage for MemoryStorage {
    fn append(&mut self, bytes: &[u8]) -> Result<()> {
        let pending = self.failures.load(Ordering::SeqCst);
        if pending > 0 {
            self.failures.store(pending - 1, Ordering::SeqCst);
            return Err(Error::StorageFailure("injected write failure".into()));
        }
        self.bytes.lock().expect("storage lock").extend_from_slice(bytes);
        Ok(())
    }

    fn read_all(&self) -> Result<Vec<u8>> {
        Ok(self.bytes())
    }

    fn len(&self) -> u64 {
        self.bytes.lock().expect("storage lock").len() as u64
    }
}

/// One log file per dataset. A failed append is rolled back by truncating
/// to the last committed length.
#[derive(Debug)]
pub struct FileStorage {
    path: PathBuf,
    file: File,
    committed: u64,
}

fn io_err(e: std::io::Error) -> Error {
    Error::StorageFailure(e.to_string())
}

impl FileStorage {
    /// Opens or creates `path`. A torn tail left by a crash is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<FileStorage> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)
            .map_err(io_err)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err)?;
        let committed = if bytes.is_empty() {
            0
        } else {
            decode_log(&bytes)?.valid_len as u64
        };
        if committed < bytes.len() as u64 {
            file.set_len(committed).map_err(io_err)?;
        }
        Ok(FileStorage { path, file, committed })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl LogStorage for FileStorage {
    fn append(&mut self, bytes: &[u8]) -> Result<()> {
        let res = self
            .file
            .seek(SeekFrom::Start(self.committed))
            .and_then(|_| self.file.write_all(bytes))
            .and_then(|_| self.file.sync_data());
        match res {
            Ok(()) => {
                self.committed += bytes.len() as u64;
                Ok(())
            }
            Err(e) => {
                let _ = self.file.set_len(self.committed);
                Err(io_err(e))
            }
        }
    }

    fn read_all(&self) -> Result<Vec<u8>> {
        let mut bytes = std::fs::read(&self.path).map_err(io_err)?;
        bytes.truncate(self.committed as usize);
        Ok(bytes)
    }

    fn len(&self) -> u64 {
        self.committed
    }
}
