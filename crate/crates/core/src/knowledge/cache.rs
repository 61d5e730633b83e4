use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use tracing::warn;

use super::{KnowledgeError, KnowledgeRecord};

/// A cache line that could not be turned into a valid record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptCacheLine {
    pub line: usize,
    pub reason: String,
}

/// Durable knowledge cache: newline-delimited JSON records, last write wins.
///
/// Reads go through an in-memory index and never touch the network. Appends
/// are serialized through one writer handle.
#[derive(Debug)]
pub struct KnowledgeCache {
    path: Option<PathBuf>,
    index: RwLock<HashMap<String, KnowledgeRecord>>,
    writer: Mutex<Option<File>>,
    corrupt: Vec<CorruptCacheLine>,
}

impl KnowledgeCache {
    /// A cache that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            index: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
            corrupt: Vec::new(),
        }
    }

    /// Opens (or lazily creates) the cache file at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |e| KnowledgeError::Io(path.display().to_string(), e);
        let mut index = HashMap::new();
        let mut corrupt = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io_err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                match parse_line(&line) {
                    Ok(record) => {
                        index.insert(record.target.clone(), record);
                    }
                    Err(reason) => {
                        warn!(path = %path.display(), line = i + 1, %reason, "skipping corrupt knowledge cache line");
                        corrupt.push(CorruptCacheLine { line: i + 1, reason });
                    }
                }
            }
        }
        Ok(Self {
            path: Some(path),
            index: RwLock::new(index),
            writer: Mutex::new(None),
            corrupt,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Lines skipped while loading.
    pub fn corrupt_lines(&self) -> &[CorruptCacheLine] {
        &self.corrupt
    }

    pub fn get(&self, target: &str) -> Option<KnowledgeRecord> {
        self.index.read().expect("cache index poisoned").get(target).cloned()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All current records, sorted by target.
    pub fn records(&self) -> Vec<KnowledgeRecord> {
        let mut out: Vec<_> = self.index.read().expect("cache index poisoned").values().cloned().collect();
        out.sort_by(|a, b| a.target.cmp(&b.target));
        out
    }

    /// Appends `record` and makes it the current entry for its target.
    pub fn put(&self, record: &KnowledgeRecord) -> Result<(), KnowledgeError> {
        record
            .validate()
            .map_err(|reason| KnowledgeError::InvalidRecord { target: record.target.clone(), reason })?;
        let mut writer = self.writer.lock().expect("cache writer poisoned");
        if let Some(path) = &self.path {
            let io_err = |e| KnowledgeError::Io(path.display().to_string(), e);
            if writer.is_none() {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).map_err(io_err)?;
                }
                *writer = Some(OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?);
            }
            let file = writer.as_mut().expect("writer opened above");
            let mut line = serde_json::to_string(record).expect("record serializes");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(io_err)?;
            file.flush().map_err(io_err)?;
        }
        // index update happens under the writer lock so file order and index agree
        self.index
            .write()
            .expect("cache index poisoned")
            .insert(record.target.clone(), record.clone());
        Ok(())
    }
}

fn parse_line(line: &str) -> Result<KnowledgeRecord, String> {
    let record: KnowledgeRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    record.validate()?;
    Ok(record)
}
