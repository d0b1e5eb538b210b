//! Chunk storage and corpus ingestion.
//!
//! The corpus file format is UTF-8 JSONL, one object per line with keys
//! `id`, `text`, `source_id` and an optional `meta` string map.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One retrievable text unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Chunk {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Chunk {
            id: id.into(),
            text: text.into(),
            source_id: String::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_source(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate chunk id: {0}")]
    DuplicateId(String),
    #[error("empty text for chunk id: {0}")]
    EmptyText(String),
    #[error("chunk store is empty")]
    EmptyStore,
    #[error("empty query")]
    EmptyQuery,
    #[error("corpus line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding provider failure: {0}")]
    ProviderFailure(String),
}

/// Immutable-after-ingest chunk collection with id lookup.
///
/// Ingestion is single-writer; a built store is safe to share behind `&`.
#[derive(Debug, Clone, Default)]
pub struct ChunkStore {
    chunks: Vec<Chunk>,
    by_id: BTreeMap<String, usize>,
}

impl ChunkStore {
    /// Build a store from chunk records, rejecting duplicates and empty text.
    pub fn ingest<I>(records: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = Chunk>,
    {
        let mut store = ChunkStore::default();
        for chunk in records {
            store.push(chunk)?;
        }
        Ok(store)
    }

    fn push(&mut self, chunk: Chunk) -> Result<(), CorpusError> {
        if chunk.id.is_empty() {
            return Err(CorpusError::Parse {
                line: self.chunks.len() + 1,
                message: "empty id".into(),
            });
        }
        if chunk.text.trim().is_empty() {
            return Err(CorpusError::EmptyText(chunk.id));
        }
        if self.by_id.contains_key(&chunk.id) {
            return Err(CorpusError::DuplicateId(chunk.id));
        }
        self.by_id.insert(chunk.id.clone(), self.chunks.len());
        self.chunks.push(chunk);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Chunk> {
        self.by_id.get(id).map(|&i| &self.chunks[i])
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Chunks in ingestion order.
    pub fn iter(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.iter()
    }

    /// Read a JSONL corpus file. Malformed lines are reported with their
    /// 1-based line number.
    pub fn from_jsonl_path(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path)?;
        Self::from_jsonl_reader(file)
    }

    pub fn from_jsonl_reader<R: Read>(reader: R) -> Result<Self, CorpusError> {
        let mut store = ChunkStore::default();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: Chunk = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            if chunk.text.trim().is_empty() {
                return Err(CorpusError::Parse {
                    line: lineno + 1,
                    message: format!("empty text for chunk id {:?}", chunk.id),
                });
            }
            store.push(chunk).map_err(|e| match e {
                CorpusError::DuplicateId(id) => CorpusError::Parse {
                    line: lineno + 1,
                    message: format!("duplicate chunk id {id:?}"),
                },
                other => other,
            })?;
        }
        Ok(store)
    }
}
