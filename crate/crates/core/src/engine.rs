//! The iterative retrieve → tag → filter loop.
//!
//! A frontier of queries starts with the original question. Each iteration
//! retrieves chunks for every frontier query, tags each chunk continue or
//! terminate, admits continue-tagged chunks to the candidate pool, and
//! spawns one next-hop query per admitted chunk through the filter. The
//! loop ends when the frontier empties or the iteration bound is reached,
//! and the pooled chunks go to the generator in a single call.

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::Retriever;
use crate::labeler::{ChunkTag, FilterInput, Labeler, QueryFilter};
use crate::llm::prompts::DatasetId;
use crate::llm::{parse_json_object, render_prompt, string_value, GatewayError, LlmGateway, LlmRequest};
use crate::tokenize::multiset_excess;
use crate::Score;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{component} failed at iteration {iteration} for query {query:?}: {source}")]
    ComponentFailure {
        component: &'static str,
        iteration: u32,
        query: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("generator failure: {0}")]
    GeneratorFailure(#[from] GatewayError),
    #[error("generator response lacks an answer: {0}")]
    AnswerParseFailure(String),
}

/// Knobs for the hop loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Chunks retrieved per frontier query per hop.
    pub k_per_hop: usize,
    /// Hard bound on hop iterations.
    pub max_iterations: usize,
    /// Drop next-hop queries whose text was already issued.
    pub dedupe_queries: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            k_per_hop: 4,
            max_iterations: 4,
            dedupe_queries: true,
        }
    }
}

/// One frontier element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryNode {
    pub text: String,
    /// Hop index; 0 is the original question.
    pub depth: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin_chunk: Option<String>,
}

impl QueryNode {
    pub fn root(question: impl Into<String>) -> Self {
        QueryNode {
            text: question.into(),
            depth: 0,
            parent_query: None,
            origin_chunk: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub chunk_id: String,
    pub score: Score,
    pub depth: usize,
}

/// Accumulated continue-tagged chunks, in admission order, no duplicates.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CandidatePool {
    entries: Vec<PoolEntry>,
    seen: HashSet<String>,
}

impl CandidatePool {
    pub fn admit(&mut self, entry: PoolEntry) -> bool {
        if self.seen.insert(entry.chunk_id.clone()) {
            self.entries.push(entry);
            true
        } else {
            false
        }
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.seen.contains(chunk_id)
    }

    pub fn seen(&self) -> &HashSet<String> {
        &self.seen
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.chunk_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// What happened to one retrieved chunk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChunkOutcome {
    pub chunk_id: String,
    pub score: Score,
    pub rank: usize,
    /// Effective tag; a continue verdict with an empty span is downgraded
    /// to terminate because it cannot seed a next-hop query.
    pub tag: ChunkTag,
    pub span: String,
    pub admitted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_query: Option<String>,
}

/// One frontier query processed within an iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryStep {
    pub query: String,
    pub depth: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin_chunk: Option<String>,
    pub outcomes: Vec<ChunkOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: u32,
    pub steps: Vec<QueryStep>,
}

/// Complete audit record for one question.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HopTrace {
    pub question: String,
    pub iterations: Vec<IterationRecord>,
    pub iterations_run: u32,
    pub generator_llm_calls: u32,
    pub wall_time_s: f64,
    /// Distinct chunks ever tagged (continue or terminate).
    pub distinct_chunks_tagged: usize,
    /// Pool size at loop end — the second candidate for the reported K.
    pub pool_size: usize,
    pub retrieval_calls: usize,
    /// Distinct tagged chunk ids in first-tagged order.
    pub tagged_chunk_ids: Vec<String>,
}

/// Run the hop loop for one question.
pub fn run(
    question: &str,
    retriever: &dyn Retriever,
    labeler: &dyn Labeler,
    filter: &dyn QueryFilter,
    config: &EngineConfig,
) -> Result<(CandidatePool, HopTrace), EngineError> {
    let started = Instant::now();
    let mut pool = CandidatePool::default();
    let mut trace = HopTrace {
        question: question.to_string(),
        ..HopTrace::default()
    };
    let mut tagged: HashSet<String> = HashSet::new();
    let mut frontier = vec![QueryNode::root(question)];
    let mut seen_queries: HashSet<String> = HashSet::new();
    seen_queries.insert(question.to_string());

    while !frontier.is_empty() && (trace.iterations_run as usize) < config.max_iterations {
        let iteration = trace.iterations_run + 1;
        let mut record = IterationRecord {
            iteration,
            steps: Vec::new(),
        };
        let mut next_frontier = Vec::new();

        for node in &frontier {
            let hits = retriever
                .retrieve(&node.text, config.k_per_hop, pool.seen())
                .map_err(|e| component_failure("retriever", iteration, &node.text, e))?;
            trace.retrieval_calls += 1;
            let mut step = QueryStep {
                query: node.text.clone(),
                depth: node.depth,
                parent_query: node.parent_query.clone(),
                origin_chunk: node.origin_chunk.clone(),
                outcomes: Vec::new(),
            };

            for hit in hits {
                let chunk = retriever.chunk(&hit.chunk_id).ok_or_else(|| {
                    component_failure(
                        "retriever",
                        iteration,
                        &node.text,
                        format!("hit names unknown chunk id {:?}", hit.chunk_id),
                    )
                })?;
                let outcome = labeler
                    .label_and_tag(&node.text, chunk)
                    .map_err(|e| component_failure("labeler", iteration, &node.text, e))?;
                if tagged.insert(hit.chunk_id.clone()) {
                    trace.tagged_chunk_ids.push(hit.chunk_id.clone());
                }

                let has_span = outcome.word_mask.iter().any(|&b| b);
                let tag = match outcome.tag {
                    ChunkTag::Continue if !has_span => ChunkTag::Terminate,
                    t => t,
                };

                let mut admitted = false;
                let mut next_query = None;
                if tag == ChunkTag::Continue {
                    admitted = pool.admit(PoolEntry {
                        chunk_id: hit.chunk_id.clone(),
                        score: hit.score,
                        depth: node.depth,
                    });
                    let input = FilterInput::new(node.text.clone(), vec![outcome.span_text.clone()]);
                    let filtered = filter
                        .filter_next_query(&input)
                        .map_err(|e| component_failure("filter", iteration, &node.text, e))?;
                    debug_assert!(
                        multiset_excess(
                            &filtered,
                            &[input.query.as_str(), outcome.span_text.as_str()]
                        )
                        .is_none(),
                        "filter invented a word absent from its input: {filtered:?}"
                    );
                    let filtered = filtered.trim().to_string();
                    if !filtered.is_empty() {
                        let fresh = !config.dedupe_queries || seen_queries.insert(filtered.clone());
                        if fresh {
                            next_frontier.push(QueryNode {
                                text: filtered.clone(),
                                depth: node.depth + 1,
                                parent_query: Some(node.text.clone()),
                                origin_chunk: Some(hit.chunk_id.clone()),
                            });
                            next_query = Some(filtered);
                        }
                    }
                }

                step.outcomes.push(ChunkOutcome {
                    chunk_id: hit.chunk_id,
                    score: hit.score,
                    rank: hit.rank,
                    tag,
                    span: outcome.span_text,
                    admitted,
                    next_query,
                });
            }
            record.steps.push(step);
        }

        trace.iterations.push(record);
        trace.iterations_run += 1;
        frontier = next_frontier;
    }

    trace.distinct_chunks_tagged = tagged.len();
    trace.pool_size = pool.len();
    trace.wall_time_s = started.elapsed().as_secs_f64();
    Ok((pool, trace))
}

fn component_failure(
    component: &'static str,
    iteration: u32,
    query: &str,
    source: impl Into<Box<dyn std::error::Error + Send + Sync>>,
) -> EngineError {
    EngineError::ComponentFailure {
        component,
        iteration,
        query: query.to_string(),
        source: source.into(),
    }
}

/// Produce the final answer with exactly one generator call.
///
/// Pooled chunk texts are concatenated in pool order into the dataset's
/// retrieval-QA prompt; an empty pool falls back to the direct-answer
/// prompt. The generator-call counter on the trace is measured from the
/// gateway, not assumed.
pub fn answer(
    question: &str,
    pool: &CandidatePool,
    retriever: &dyn Retriever,
    generator: &LlmGateway,
    dataset: DatasetId,
    trace: &mut HopTrace,
) -> Result<String, EngineError> {
    let before = generator.counts();
    let prompt = if pool.is_empty() {
        let vars = [("question", question)].into_iter().collect();
        render_prompt(&dataset.direct_template(), &vars)?
    } else {
        let knowledge = knowledge_block(pool, retriever);
        let vars = [("knowledge", knowledge.as_str()), ("question", question)]
            .into_iter()
            .collect();
        render_prompt(&dataset.retrieval_template(), &vars)?
    };
    let raw = generator.complete(&LlmRequest::new(prompt))?;
    trace.generator_llm_calls += (generator.counts().calls - before.calls) as u32;
    let map = parse_json_object(&raw, &["answer"])
        .map_err(|e| EngineError::AnswerParseFailure(e.to_string()))?;
    string_value(&map, "answer").map_err(|e| EngineError::AnswerParseFailure(e.to_string()))
}

/// Chunk texts in pool order, blank-line separated.
pub fn knowledge_block(pool: &CandidatePool, retriever: &dyn Retriever) -> String {
    pool.entries()
        .iter()
        .filter_map(|e| retriever.chunk(&e.chunk_id))
        .map(|c| c.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n")
}
