//! Iterative multi-hop retrieval without per-hop LLM calls.
//!
//! A retriever pulls chunks for the current query; a token-level labeler
//! tags each chunk continue/terminate and marks its useful words;
//! continue-tagged chunks join a candidate pool while a filter assembles
//! the next-hop query from the current query plus the labeled span. The
//! loop runs until the frontier empties or an iteration bound is hit,
//! then a single generator call answers over the pooled chunks.
//!
//! The crate also ships the synthetic training-data constructor for the
//! two classifiers (decompose → label tokens → filter queries → mine hard
//! negatives) and an evaluation harness with EM/F1/recall@K metrics plus
//! three side-by-side retrieval strategies.
//!
//! Vector math and metrics are generic over [`scalar::Scalar`] (f32/f64);
//! the pipeline itself runs on the [`Score`] alias below.

pub mod corpus;
pub mod dataset;
pub mod embed;
pub mod engine;
pub mod index;
pub mod labeler;
pub mod llm;
pub mod metrics;
pub mod scalar;
pub mod strategy;
pub mod synthesis;
pub mod tokenize;

/// Scalar used by the pipeline for similarities, metrics, and reports.
pub type Score = f64;

/// Embedding at pipeline precision.
pub type Embedding = embed::EmbeddingVector<Score>;

/// Dense index at pipeline precision.
pub type Index = index::DenseIndex<Score>;

pub use corpus::{Chunk, ChunkStore, CorpusError};
pub use embed::{Embedder, HashedBowEmbedder};
pub use engine::{CandidatePool, EngineConfig, EngineError, HopTrace};
pub use index::{RetrievalHit, Retriever};
pub use labeler::{
    ChunkTag, FilterInput, LabelOutcome, Labeler, OracleFilter, OracleLabeler, QueryFilter,
    TokenModelError,
};
pub use llm::{DatasetId, GatewayError, JudgeVerdict, LlmGateway, LlmRequest};
pub use metrics::{exact_match, normalize_answer, recall_at_k, token_f1, EvalError, EvalRow};
pub use strategy::{StrategyConfig, StrategyId, StrategyReport, TraceRecord};
pub use synthesis::{SynthesisError, SynthesisReport};
pub use tokenize::{tokenize_words, WordToken};
