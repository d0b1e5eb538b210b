//! Synthetic training-data construction for the labeler and the filter.
//!
//! Four stages per question: decompose the multi-hop question into
//! single-hop sub-questions with dependencies, extract the words of each
//! sub-question's chunk worth keeping, build the filtered next-hop query,
//! and mine one hard negative per sub-question. LLM outputs violating the
//! prompts' no-invention guidelines are rejected, not repaired; rejected
//! records are counted in the report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chunk, CorpusError};
use crate::dataset::{DatasetRow, SubQuestionSpec};
use crate::index::DenseIndex;
use crate::labeler::{ChunkTag, FilterInput};
use crate::llm::{parse_json_object, render_prompt, string_value, GatewayError, LlmGateway, LlmRequest};
use crate::scalar::Scalar;
use crate::tokenize::{join_tokens, match_subsequence, tokenize_words, word_surfaces};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("could not parse LLM output: {0}")]
    LlmParseFailure(String),
    #[error("invalid dependency graph: {0}")]
    InvalidDependencyGraph(String),
    #[error("extracted word {word:?} is not an in-order match in the chunk")]
    ExtractionNotInChunk { word: String },
    #[error("filtered query contains invented word {word:?}")]
    FilteredQueryInvalid { word: String },
    #[error("no non-oracle chunk available for negative sampling")]
    NoNegativeAvailable,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// One parsed sub-question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecomposedQuestion {
    pub id: String,
    pub sub_question: String,
    pub answer: String,
    pub dependency: Vec<String>,
    /// Chunk id supporting this sub-question (already resolved).
    pub document: String,
}

/// One labeler training example. `labeled_words` carries the index form of
/// `word_labels` so the output file doubles as an oracle-labeler fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelerRecord {
    pub query: String,
    pub chunk_id: String,
    pub chunk_text: String,
    pub word_labels: Vec<bool>,
    pub labeled_words: Vec<usize>,
    pub tag: ChunkTag,
}

/// One filter training example. `query`/`info` keep the oracle-filter
/// fixture schema; `rendered_input` and `target_words` carry the
/// token-classifier view of the same example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterRecord {
    pub query: String,
    pub info: Vec<String>,
    pub rendered_input: String,
    pub target_words: Vec<bool>,
    pub filtered_query: String,
}

/// Per-stage accounting for one synthesis run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub rows_total: usize,
    pub rows_processed: usize,
    pub rows_failed: usize,
    pub decompose_failures: usize,
    pub extraction_failures: usize,
    pub filter_failures: usize,
    pub negative_failures: usize,
    pub labeler_records: usize,
    pub filter_records: usize,
    /// Filter records emitted as pass-through because the sub-question has
    /// no dependencies (comparison-type questions).
    pub passthrough_filter_records: usize,
    pub gold_decompositions_used: usize,
}

// ---------------------------------------------------------------------------
// Stage 1: question decomposition
// ---------------------------------------------------------------------------

/// Prompt the LLM to decompose `question` over the given supporting docs
/// and validate the result into a dependency-ordered set.
pub fn decompose(
    gateway: &LlmGateway,
    question: &str,
    docs: &[&Chunk],
) -> Result<Vec<DecomposedQuestion>, SynthesisError> {
    assert!(!docs.is_empty(), "decompose requires at least one document");
    let prompt = decompose_prompt(question, docs);
    let raw = gateway.complete(&LlmRequest::new(prompt))?;
    let map = parse_json_object(&raw, &["decomposed_questions"])
        .map_err(|e| SynthesisError::LlmParseFailure(e.to_string()))?;
    let entries: BTreeMap<String, SubQuestionSpec> =
        serde_json::from_value(map["decomposed_questions"].clone())
            .map_err(|e| SynthesisError::LlmParseFailure(e.to_string()))?;
    from_spec_map(&entries, docs)
}

/// The decomposition prompt: verbatim instruction block, then the question
/// and the `#`-numbered documents.
pub fn decompose_prompt(question: &str, docs: &[&Chunk]) -> String {
    let mut prompt = render_prompt("synthesis.decompose", &BTreeMap::new()).unwrap();
    prompt.push_str("\nQuestion: ");
    prompt.push_str(question);
    for (i, doc) in docs.iter().enumerate() {
        prompt.push_str(&format!("\n#{}: {}", i + 1, doc.text));
    }
    prompt
}

/// Validate a sub-question map (from the LLM or a gold decomposition)
/// against the provided documents.
pub fn from_spec_map(
    entries: &BTreeMap<String, SubQuestionSpec>,
    docs: &[&Chunk],
) -> Result<Vec<DecomposedQuestion>, SynthesisError> {
    if entries.is_empty() {
        return Err(SynthesisError::LlmParseFailure(
            "decomposition has no sub-questions".into(),
        ));
    }
    let mut out = Vec::with_capacity(entries.len());
    for (id, spec) in entries {
        let document = resolve_document(&spec.document, docs).ok_or_else(|| {
            SynthesisError::InvalidDependencyGraph(format!(
                "sub-question {id} names unknown document {:?}",
                spec.document
            ))
        })?;
        out.push(DecomposedQuestion {
            id: id.clone(),
            sub_question: spec.sub_question.clone(),
            answer: spec.answer.clone(),
            dependency: spec.dependency.clone(),
            document,
        });
    }
    let ids: HashSet<&str> = out.iter().map(|q| q.id.as_str()).collect();
    for q in &out {
        for dep in &q.dependency {
            if !ids.contains(dep.as_str()) {
                return Err(SynthesisError::InvalidDependencyGraph(format!(
                    "sub-question {} depends on unknown id {dep:?}",
                    q.id
                )));
            }
            if dep == &q.id {
                return Err(SynthesisError::InvalidDependencyGraph(format!(
                    "sub-question {} depends on itself",
                    q.id
                )));
            }
        }
    }
    topological_order(out)
}

/// Accept a raw chunk id, `#n`, or `n` (1-based position) as a document
/// reference.
fn resolve_document(reference: &str, docs: &[&Chunk]) -> Option<String> {
    if let Some(c) = docs.iter().find(|c| c.id == reference) {
        return Some(c.id.clone());
    }
    let digits = reference.strip_prefix('#').unwrap_or(reference);
    if let Ok(n) = digits.parse::<usize>() {
        if n >= 1 && n <= docs.len() {
            return Some(docs[n - 1].id.clone());
        }
    }
    None
}

/// Kahn's algorithm with a deterministic ready-set order (numeric ids
/// first, then lexicographic). Fails on cycles.
fn topological_order(
    items: Vec<DecomposedQuestion>,
) -> Result<Vec<DecomposedQuestion>, SynthesisError> {
    let mut by_id: BTreeMap<String, DecomposedQuestion> =
        items.into_iter().map(|q| (q.id.clone(), q)).collect();
    let mut indegree: BTreeMap<String, usize> = by_id
        .values()
        .map(|q| (q.id.clone(), q.dependency.len()))
        .collect();
    let mut dependents: HashMap<String, Vec<String>> = HashMap::new();
    for q in by_id.values() {
        for dep in &q.dependency {
            dependents.entry(dep.clone()).or_default().push(q.id.clone());
        }
    }
    let mut ready: Vec<String> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(id, _)| id.clone())
        .collect();
    let mut out = Vec::with_capacity(by_id.len());
    while !ready.is_empty() {
        ready.sort_by(|a, b| id_order(a).cmp(&id_order(b)));
        let id = ready.remove(0);
        for dependent in dependents.get(&id).cloned().unwrap_or_default() {
            let d = indegree.get_mut(&dependent).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(dependent);
            }
        }
        out.push(by_id.remove(&id).unwrap());
    }
    if !by_id.is_empty() {
        return Err(SynthesisError::InvalidDependencyGraph(format!(
            "dependency cycle involving ids {:?}",
            by_id.keys().collect::<Vec<_>>()
        )));
    }
    Ok(out)
}

fn id_order(id: &str) -> (u8, u64, String) {
    match id.parse::<u64>() {
        Ok(n) => (0, n, id.to_string()),
        Err(_) => (1, 0, id.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Stage 2: token labeling
// ---------------------------------------------------------------------------

/// Ask the LLM for the chunk words worth keeping for this sub-question and
/// validate them as an in-order subsequence of the chunk's words.
pub fn extract_tokens(
    gateway: &LlmGateway,
    sub_q: &DecomposedQuestion,
    chunk: &Chunk,
) -> Result<Vec<usize>, SynthesisError> {
    debug_assert_eq!(sub_q.document, chunk.id);
    let prompt = token_label_prompt(sub_q, chunk);
    let raw = gateway.complete(&LlmRequest::new(prompt))?;
    let map = parse_json_object(&raw, &["extracted_words"])
        .map_err(|e| SynthesisError::LlmParseFailure(e.to_string()))?;
    let extracted = string_value(&map, "extracted_words")
        .map_err(|e| SynthesisError::LlmParseFailure(e.to_string()))?;
    validate_extraction(&extracted, &chunk.text)
}

pub fn token_label_prompt(sub_q: &DecomposedQuestion, chunk: &Chunk) -> String {
    let mut prompt = render_prompt("synthesis.token_label", &BTreeMap::new()).unwrap();
    prompt.push_str("\nQuestion: ");
    prompt.push_str(&sub_q.sub_question);
    prompt.push_str("\nAnswer: ");
    prompt.push_str(&sub_q.answer);
    prompt.push_str("\nParagraph: ");
    prompt.push_str(&chunk.text);
    prompt
}

/// Word-level validation ("Only extract words that occurred in the
/// paragraph", no reordering): the extraction, tokenized the same way as
/// the chunk, must be an in-order subsequence of the chunk's words.
pub fn validate_extraction(extracted: &str, chunk_text: &str) -> Result<Vec<usize>, SynthesisError> {
    let chunk_tokens = tokenize_words(chunk_text);
    let wanted = word_surfaces(extracted);
    match match_subsequence(&wanted, &chunk_tokens) {
        Some(indices) => Ok(indices),
        None => {
            // report the first word that breaks the match
            let mut pos = 0;
            for w in &wanted {
                match chunk_tokens[pos..].iter().position(|t| &t.surface == w) {
                    Some(found) => pos += found + 1,
                    None => {
                        return Err(SynthesisError::ExtractionNotInChunk { word: w.clone() })
                    }
                }
            }
            unreachable!("subsequence failure must name a word");
        }
    }
}

// ---------------------------------------------------------------------------
// Stage 3: next-hop question filtering
// ---------------------------------------------------------------------------

/// Ask the LLM for the filtered next-hop query given the sub-question and
/// the labeled spans of its dependencies; enforce the no-invention rule.
pub fn build_filtered_query(
    gateway: &LlmGateway,
    sub_q: &DecomposedQuestion,
    parent_infos: &[String],
) -> Result<String, SynthesisError> {
    let input = FilterInput::new(sub_q.sub_question.clone(), parent_infos.to_vec());
    let prompt = query_filter_prompt(&input);
    let raw = gateway.complete(&LlmRequest::new(prompt))?;
    let map = parse_json_object(&raw, &["filtered_query"])
        .map_err(|e| SynthesisError::LlmParseFailure(e.to_string()))?;
    let filtered = string_value(&map, "filtered_query")
        .map_err(|e| SynthesisError::LlmParseFailure(e.to_string()))?;
    validate_filtered_query(&filtered, &sub_q.sub_question, parent_infos)?;
    Ok(filtered)
}

pub fn query_filter_prompt(input: &FilterInput) -> String {
    let mut prompt = render_prompt("synthesis.query_filter", &BTreeMap::new()).unwrap();
    prompt.push('\n');
    prompt.push_str(&input.render());
    prompt
}

/// Every output word must come from the question or a known info span
/// (multiset containment, exact case-sensitive word match).
pub fn validate_filtered_query(
    filtered: &str,
    question: &str,
    infos: &[String],
) -> Result<(), SynthesisError> {
    let mut sources: Vec<&str> = vec![question];
    sources.extend(infos.iter().map(String::as_str));
    if let Some(word) = crate::tokenize::multiset_excess(filtered, &sources) {
        return Err(SynthesisError::FilteredQueryInvalid { word });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Stage 4: negative sampling
// ---------------------------------------------------------------------------

/// The highest-ranked chunk for `next_q` whose id is outside the oracle
/// set: the most similar but not relevant chunk.
pub fn sample_hard_negative<'a, S: Scalar>(
    next_q: &str,
    oracle_ids: &HashSet<String>,
    index: &'a DenseIndex<S>,
) -> Result<&'a Chunk, SynthesisError> {
    if index.len() <= oracle_ids.len() {
        return Err(SynthesisError::NoNegativeAvailable);
    }
    let hits = index.search(next_q, oracle_ids.len() + 1)?;
    hits.iter()
        .find(|h| !oracle_ids.contains(&h.chunk_id))
        .and_then(|h| index.chunk(&h.chunk_id))
        .ok_or(SynthesisError::NoNegativeAvailable)
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// Run all four stages over a dataset.
///
/// Per sub-question: one positive labeler record (continue, labels from
/// token extraction), one hard-negative record (terminate, all-false
/// labels), and one filter record. Sub-questions whose extraction or
/// filtering is rejected are skipped and counted; a decomposition failure
/// skips the whole row.
pub fn build_records<S: Scalar>(
    gateway: &LlmGateway,
    dataset: &[DatasetRow],
    index: &DenseIndex<S>,
) -> (Vec<LabelerRecord>, Vec<FilterRecord>, SynthesisReport) {
    let mut labeler_records = Vec::new();
    let mut filter_records = Vec::new();
    let mut report = SynthesisReport {
        rows_total: dataset.len(),
        ..SynthesisReport::default()
    };

    for row in dataset {
        match synthesize_row(gateway, row, index, &mut report) {
            Ok((mut lab, mut fil)) => {
                report.rows_processed += 1;
                labeler_records.append(&mut lab);
                filter_records.append(&mut fil);
            }
            Err(_) => {
                report.rows_failed += 1;
                report.decompose_failures += 1;
            }
        }
    }

    report.labeler_records = labeler_records.len();
    report.filter_records = filter_records.len();
    (labeler_records, filter_records, report)
}

fn synthesize_row<S: Scalar>(
    gateway: &LlmGateway,
    row: &DatasetRow,
    index: &DenseIndex<S>,
    report: &mut SynthesisReport,
) -> Result<(Vec<LabelerRecord>, Vec<FilterRecord>), SynthesisError> {
    let docs: Vec<&Chunk> = row
        .oracle_chunk_ids
        .iter()
        .filter_map(|id| index.chunk(id))
        .collect();
    if docs.is_empty() || docs.len() != row.oracle_chunk_ids.len() {
        return Err(SynthesisError::InvalidDependencyGraph(format!(
            "row {} references chunks missing from the index",
            row.id
        )));
    }

    let sub_questions = match &row.decomposition {
        Some(gold) => {
            let qs = from_spec_map(gold, &docs)?;
            report.gold_decompositions_used += 1;
            qs
        }
        None => decompose(gateway, &row.question, &docs)?,
    };

    let oracle_ids = row.oracle_ids();
    let mut spans: HashMap<String, String> = HashMap::new();
    let mut labeler_records = Vec::new();
    let mut filter_records = Vec::new();

    'subq: for sub_q in &sub_questions {
        // dependents need their parents' spans; a missing span means the
        // parent was rejected, so this branch is unusable too
        let mut parent_infos = Vec::with_capacity(sub_q.dependency.len());
        for dep in &sub_q.dependency {
            match spans.get(dep) {
                Some(span) => parent_infos.push(span.clone()),
                None => {
                    report.extraction_failures += 1;
                    continue 'subq;
                }
            }
        }

        let chunk = index
            .chunk(&sub_q.document)
            .expect("document resolved at decomposition time");
        let indices = match extract_tokens(gateway, sub_q, chunk) {
            Ok(indices) => indices,
            Err(_) => {
                report.extraction_failures += 1;
                continue;
            }
        };
        let tokens = tokenize_words(&chunk.text);
        let mut mask = vec![false; tokens.len()];
        for &i in &indices {
            mask[i] = true;
        }
        let span = join_tokens(&tokens, &mask);
        spans.insert(sub_q.id.clone(), span.clone());

        // the query the trained labeler will see at this hop: the original
        // question for root sub-questions, the filtered next-hop query for
        // dependent ones
        let (filtered, passthrough) = if sub_q.dependency.is_empty() {
            (sub_q.sub_question.clone(), true)
        } else {
            match build_filtered_query(gateway, sub_q, &parent_infos) {
                Ok(f) => (f, false),
                Err(_) => {
                    report.filter_failures += 1;
                    continue;
                }
            }
        };
        let hop_query = if sub_q.dependency.is_empty() {
            row.question.clone()
        } else {
            filtered.clone()
        };

        labeler_records.push(LabelerRecord {
            query: hop_query.clone(),
            chunk_id: chunk.id.clone(),
            chunk_text: chunk.text.clone(),
            word_labels: mask,
            labeled_words: indices,
            tag: ChunkTag::Continue,
        });

        match sample_hard_negative(&hop_query, &oracle_ids, index) {
            Ok(negative) => {
                let n = tokenize_words(&negative.text).len();
                labeler_records.push(LabelerRecord {
                    query: hop_query.clone(),
                    chunk_id: negative.id.clone(),
                    chunk_text: negative.text.clone(),
                    word_labels: vec![false; n],
                    labeled_words: Vec::new(),
                    tag: ChunkTag::Terminate,
                });
            }
            Err(_) => report.negative_failures += 1,
        }

        let input = FilterInput::new(sub_q.sub_question.clone(), parent_infos.clone());
        let rendered_input = input.render();
        let target_words = align_target_words(&filtered, &rendered_input);
        if passthrough {
            report.passthrough_filter_records += 1;
        }
        filter_records.push(FilterRecord {
            query: input.query,
            info: input.info_spans,
            rendered_input,
            target_words,
            filtered_query: filtered,
        });
    }

    Ok((labeler_records, filter_records))
}

/// Mark which rendered-input tokens survive into the filtered query
/// (first unused occurrence per output token).
fn align_target_words(filtered: &str, rendered_input: &str) -> Vec<bool> {
    let input_tokens = word_surfaces(rendered_input);
    let mut mask = vec![false; input_tokens.len()];
    for word in word_surfaces(filtered) {
        let slot = input_tokens
            .iter()
            .enumerate()
            .find(|(i, t)| **t == word && !mask[*i])
            .map(|(i, _)| i);
        if let Some(i) = slot {
            mask[i] = true;
        }
    }
    mask
}

/// Write records as JSONL.
pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], mut w: W) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}
