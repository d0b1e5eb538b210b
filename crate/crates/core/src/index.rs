//! Exhaustive dense cosine retrieval over an in-memory corpus.
//!
//! No ANN structures: corpora here are desk-scale and the oracle tests
//! need exact top-k. Ties break by ascending chunk id so every search is
//! fully deterministic.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, ChunkStore, CorpusError};
use crate::embed::{Embedder, EmbeddingVector};
use crate::scalar::Scalar;
use crate::Score;

/// One search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit<S = Score> {
    pub chunk_id: String,
    pub score: S,
    /// 1-based rank within the result list.
    pub rank: usize,
}

/// Immutable dense index: every chunk embedded exactly once at build time.
pub struct DenseIndex<S: Scalar = Score> {
    store: ChunkStore,
    /// (chunk_id, embedding), sorted by chunk_id.
    entries: Vec<(String, EmbeddingVector<S>)>,
    embedder: Arc<dyn Embedder<S>>,
}

impl<S: Scalar> DenseIndex<S> {
    /// Embed every chunk of the store. Fails on an empty store.
    pub fn build(store: ChunkStore, embedder: Arc<dyn Embedder<S>>) -> Result<Self, CorpusError> {
        if store.is_empty() {
            return Err(CorpusError::EmptyStore);
        }
        let mut entries = Vec::with_capacity(store.len());
        for chunk in store.iter() {
            entries.push((chunk.id.clone(), embedder.embed(&chunk.text)?));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(DenseIndex {
            store,
            entries,
            embedder,
        })
    }

    /// Build with embeddings loaded from a cache instead of recomputing.
    /// The cache must cover exactly the store's chunk ids at the embedder's
    /// dimension.
    pub fn build_with_cache(
        store: ChunkStore,
        embedder: Arc<dyn Embedder<S>>,
        cache: EmbeddingCache<S>,
    ) -> Result<Self, CorpusError> {
        if store.is_empty() {
            return Err(CorpusError::EmptyStore);
        }
        if cache.embedder_id != embedder.id() || cache.dim != embedder.dim() {
            return Err(CorpusError::ProviderFailure(format!(
                "embedding cache was built by {}/d={} but the configured embedder is {}/d={}",
                cache.embedder_id,
                cache.dim,
                embedder.id(),
                embedder.dim()
            )));
        }
        let mut entries = Vec::with_capacity(store.len());
        for chunk in store.iter() {
            let emb = cache.vectors.get(&chunk.id).ok_or_else(|| {
                CorpusError::ProviderFailure(format!("cache is missing chunk id {:?}", chunk.id))
            })?;
            entries.push((chunk.id.clone(), emb.clone()));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(DenseIndex {
            store,
            entries,
            embedder,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn store(&self) -> &ChunkStore {
        &self.store
    }

    pub fn chunk(&self, id: &str) -> Option<&Chunk> {
        self.store.get(id)
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder<S>> {
        &self.embedder
    }

    /// Exact top-k by cosine score, ties broken by ascending chunk id.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<RetrievalHit<S>>, CorpusError> {
        self.search_excluding(query, k, &HashSet::new())
    }

    /// Top-k among chunks whose id is not in `exclude`.
    pub fn search_excluding(
        &self,
        query: &str,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<RetrievalHit<S>>, CorpusError> {
        if query.trim().is_empty() {
            return Err(CorpusError::EmptyQuery);
        }
        let qv = self.embedder.embed(query)?;
        let mut scored: Vec<(&str, S)> = self
            .entries
            .iter()
            .filter(|(id, _)| !exclude.contains(id))
            .map(|(id, emb)| (id.as_str(), qv.dot(emb)))
            .collect();
        // entries are pre-sorted by id, so a stable sort on the score alone
        // leaves equal scores in ascending-id order
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (id, score))| RetrievalHit {
                chunk_id: id.to_string(),
                score,
                rank: i + 1,
            })
            .collect())
    }

    /// Snapshot of the stored embeddings for cache persistence.
    pub fn to_cache(&self) -> EmbeddingCache<S> {
        EmbeddingCache {
            embedder_id: self.embedder.id().to_string(),
            dim: self.embedder.dim(),
            vectors: self
                .entries
                .iter()
                .map(|(id, emb)| (id.clone(), emb.clone()))
                .collect(),
        }
    }
}

/// Embedding cache sidecar, persisted as JSONL: a header line with the
/// embedder id and dimension, then one `{"id", "values"}` object per chunk
/// in ascending id order.
pub struct EmbeddingCache<S: Scalar> {
    pub embedder_id: String,
    pub dim: usize,
    pub vectors: std::collections::BTreeMap<String, EmbeddingVector<S>>,
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    schema: String,
    embedder: String,
    dim: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheRow<S: Scalar> {
    id: String,
    values: Vec<S>,
}

const CACHE_SCHEMA: &str = "embedding-cache/v1";

impl<S: Scalar + Serialize + for<'de> Deserialize<'de>> EmbeddingCache<S> {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        let header = CacheHeader {
            schema: CACHE_SCHEMA.to_string(),
            embedder: self.embedder_id.clone(),
            dim: self.dim,
            count: self.vectors.len(),
        };
        writeln!(w, "{}", serde_json::to_string(&header).unwrap())?;
        for (id, emb) in &self.vectors {
            let row = CacheRow {
                id: id.clone(),
                values: emb.values().to_vec(),
            };
            writeln!(w, "{}", serde_json::to_string(&row).unwrap())?;
        }
        Ok(())
    }

    pub fn write_to_path(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self, CorpusError> {
        let mut lines = BufReader::new(reader).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| CorpusError::Parse {
                line: 1,
                message: "empty cache file".into(),
            })??;
        let header: CacheHeader =
            serde_json::from_str(&header_line).map_err(|e| CorpusError::Parse {
                line: 1,
                message: e.to_string(),
            })?;
        if header.schema != CACHE_SCHEMA {
            return Err(CorpusError::Parse {
                line: 1,
                message: format!("unknown cache schema {:?}", header.schema),
            });
        }
        let mut vectors = std::collections::BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: CacheRow<S> = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            if row.values.len() != header.dim {
                return Err(CorpusError::Parse {
                    line: i + 2,
                    message: format!(
                        "expected {} values, found {}",
                        header.dim,
                        row.values.len()
                    ),
                });
            }
            vectors.insert(row.id, EmbeddingVector::normalized(row.values));
        }
        Ok(EmbeddingCache {
            embedder_id: header.embedder,
            dim: header.dim,
            vectors,
        })
    }

    pub fn read_from_path(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(file)
    }
}

/// Retrieval contract used by the hop engine and the evaluation strategies.
/// Scores surface at the pipeline's [`Score`] precision regardless of the
/// index's internal scalar type.
pub trait Retriever: Send + Sync {
    fn retrieve(
        &self,
        query: &str,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<RetrievalHit>, CorpusError>;

    fn chunk(&self, id: &str) -> Option<&Chunk>;
}

impl<S: Scalar> Retriever for DenseIndex<S> {
    fn retrieve(
        &self,
        query: &str,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<RetrievalHit>, CorpusError> {
        Ok(self
            .search_excluding(query, k, exclude)?
            .into_iter()
            .map(|h| RetrievalHit {
                chunk_id: h.chunk_id,
                score: h.score.to_f64().unwrap_or(f64::NAN),
                rank: h.rank,
            })
            .collect())
    }

    fn chunk(&self, id: &str) -> Option<&Chunk> {
        self.store.get(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedBowEmbedder;

    fn index_of(chunks: Vec<(&str, &str)>) -> DenseIndex<f64> {
        let store = ChunkStore::ingest(
            chunks
                .into_iter()
                .map(|(id, text)| Chunk::new(id, text))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        DenseIndex::build(store, Arc::new(HashedBowEmbedder::default())).unwrap()
    }

    #[test]
    fn covers_every_chunk_once() {
        let idx = index_of(vec![("a", "alpha"), ("b", "beta"), ("c", "gamma")]);
        assert_eq!(idx.len(), 3);
    }

    #[test]
    fn empty_store_rejected() {
        match DenseIndex::<f64>::build(
            ChunkStore::default(),
            Arc::new(HashedBowEmbedder::default()),
        ) {
            Err(CorpusError::EmptyStore) => {}
            Err(other) => panic!("unexpected error: {other}"),
            Ok(_) => panic!("empty store must be rejected"),
        }
    }

    #[test]
    fn top_one_finds_aligned_chunk() {
        let idx = index_of(vec![
            ("a", "solar panels energy"),
            ("b", "medieval castle history"),
        ]);
        let hits = idx.search("solar energy", 1).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].chunk_id, "a");
        assert_eq!(hits[0].rank, 1);
    }

    #[test]
    fn k_larger_than_index_returns_all() {
        let idx = index_of(vec![("a", "one thing"), ("b", "two thing"), ("c", "red fish")]);
        let hits = idx.search("thing", 10).unwrap();
        assert_eq!(hits.len(), 3);
    }

    #[test]
    fn identical_text_ties_break_by_id() {
        let idx = index_of(vec![
            ("z-copy", "anchorage mall directory"),
            ("a-copy", "anchorage mall directory"),
        ]);
        let hits = idx.search("anchorage mall", 2).unwrap();
        assert_eq!(hits[0].chunk_id, "a-copy");
        assert_eq!(hits[1].chunk_id, "z-copy");
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn empty_query_rejected() {
        let idx = index_of(vec![("a", "text")]);
        assert!(matches!(
            idx.search("  ", 1).unwrap_err(),
            CorpusError::EmptyQuery
        ));
    }

    #[test]
    fn excluding_removes_from_candidates() {
        let idx = index_of(vec![
            ("a", "solar panels energy"),
            ("b", "solar panels"),
            ("c", "medieval castle"),
        ]);
        let mut exclude = HashSet::new();
        exclude.insert("a".to_string());
        let hits = idx.search_excluding("solar panels energy", 2, &exclude).unwrap();
        assert_eq!(hits[0].chunk_id, "b");
        assert!(hits.iter().all(|h| h.chunk_id != "a"));
    }

    #[test]
    fn rebuild_gives_identical_results() {
        let chunks = vec![("a", "north wind"), ("b", "south sea"), ("c", "north sea")];
        let one = index_of(chunks.clone());
        let two = index_of(chunks);
        let q = "north sea wind";
        assert_eq!(one.search(q, 3).unwrap(), two.search(q, 3).unwrap());
    }

    #[test]
    fn cache_roundtrip_preserves_search() {
        let chunks = vec![("a", "north wind"), ("b", "south sea"), ("c", "north sea")];
        let idx = index_of(chunks.clone());
        let mut buf = Vec::new();
        idx.to_cache().write_to(&mut buf).unwrap();
        let cache = EmbeddingCache::<f64>::read_from(buf.as_slice()).unwrap();
        let store = ChunkStore::ingest(
            chunks
                .into_iter()
                .map(|(id, text)| Chunk::new(id, text))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let from_cache =
            DenseIndex::build_with_cache(store, Arc::new(HashedBowEmbedder::default()), cache)
                .unwrap();
        let q = "north sea wind";
        assert_eq!(idx.search(q, 3).unwrap(), from_cache.search(q, 3).unwrap());
    }

    #[test]
    fn prefix_property_of_top_k() {
        let idx = index_of(vec![
            ("a", "alpha beta gamma"),
            ("b", "beta gamma delta"),
            ("c", "gamma delta epsilon"),
            ("d", "delta epsilon zeta"),
        ]);
        let q = "beta gamma";
        let mut prev: Vec<String> = Vec::new();
        for k in 1..=4 {
            let ids: Vec<String> = idx
                .search(q, k)
                .unwrap()
                .into_iter()
                .map(|h| h.chunk_id)
                .collect();
            assert_eq!(&ids[..prev.len()], prev.as_slice());
            prev = ids;
        }
    }
}
