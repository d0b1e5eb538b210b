//! The two small token-level classifiers: the labeler/tagger (marks useful
//! words in a chunk and tags it continue/terminate) and the filter
//! (assembles the next-hop query from the current query plus labeled spans).
//!
//! Two implementations ship for each contract: a fixture-backed oracle used
//! by tests and offline runs, and an HTTP adapter for a trained model served
//! behind an endpoint. The adapter's wire contract is word-level — any
//! subword-to-word alignment (e.g. first-subtoken label propagation) is the
//! serving side's responsibility.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Chunk;
use crate::tokenize::{join_tokens, tokenize_words};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkTag {
    Continue,
    Terminate,
}

/// Verdict for one (query, chunk) pair: the tag plus a word-level mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub tag: ChunkTag,
    /// One flag per word token of the chunk text.
    pub word_mask: Vec<bool>,
    /// Selected words joined back together (adjacent punctuation
    /// reattached), e.g. "KGOT, in the Dimond Center".
    pub span_text: String,
}

impl LabelOutcome {
    /// Build an outcome from a mask, deriving the span text.
    pub fn from_mask(tag: ChunkTag, chunk_text: &str, word_mask: Vec<bool>) -> Self {
        let tokens = tokenize_words(chunk_text);
        debug_assert_eq!(tokens.len(), word_mask.len());
        let span_text = join_tokens(&tokens, &word_mask);
        LabelOutcome {
            tag,
            word_mask,
            span_text,
        }
    }

    pub fn terminate(chunk_text: &str) -> Self {
        let n = tokenize_words(chunk_text).len();
        LabelOutcome {
            tag: ChunkTag::Terminate,
            word_mask: vec![false; n],
            span_text: String::new(),
        }
    }
}

/// Input to the filter: the current query plus the labeled spans feeding it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterInput {
    pub query: String,
    pub info_spans: Vec<String>,
}

impl FilterInput {
    pub fn new(query: impl Into<String>, info_spans: Vec<String>) -> Self {
        FilterInput {
            query: query.into(),
            info_spans,
        }
    }

    /// Canonical rendering: `Q: <query> Info: <span1>, <span2>`.
    pub fn render(&self) -> String {
        format!("Q: {} Info: {}", self.query, self.info_spans.join(", "))
    }
}

#[derive(Debug, Error)]
pub enum TokenModelError {
    #[error("no oracle annotation for query {query:?} and chunk {chunk_id:?}")]
    AnnotationMissing { query: String, chunk_id: String },
    #[error("inference failure: {0}")]
    InferenceFailure(String),
    #[error("fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Labeler/tagger contract.
pub trait Labeler: Send + Sync {
    fn label_and_tag(&self, query: &str, chunk: &Chunk) -> Result<LabelOutcome, TokenModelError>;
}

/// Filter contract. An empty output is legal and marks a dead branch.
pub trait QueryFilter: Send + Sync {
    fn filter_next_query(&self, input: &FilterInput) -> Result<String, TokenModelError>;
}

// ---------------------------------------------------------------------------
// Oracle implementations (fixture-backed)
// ---------------------------------------------------------------------------

/// One labeler fixture row: `query`, `chunk_id`, `tag`, `labeled_words`
/// (word indices into the chunk's token sequence).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelerFixture {
    pub query: String,
    pub chunk_id: String,
    pub tag: ChunkTag,
    #[serde(default)]
    pub labeled_words: Vec<usize>,
}

/// Ground-truth labeler over a fixed annotation set.
///
/// Strict by default: pairs outside the fixture set raise
/// [`TokenModelError::AnnotationMissing`]. `with_fallback_terminate` makes
/// unknown pairs read as terminate instead, which is how harness fixtures
/// usually want distractor chunks to behave.
pub struct OracleLabeler {
    annotations: HashMap<(String, String), (ChunkTag, Vec<usize>)>,
    fallback_terminate: bool,
}

impl OracleLabeler {
    pub fn new(rows: Vec<LabelerFixture>) -> Self {
        let annotations = rows
            .into_iter()
            .map(|r| ((r.query, r.chunk_id), (r.tag, r.labeled_words)))
            .collect();
        OracleLabeler {
            annotations,
            fallback_terminate: false,
        }
    }

    pub fn with_fallback_terminate(mut self) -> Self {
        self.fallback_terminate = true;
        self
    }

    pub fn from_jsonl_reader<R: Read>(reader: R) -> Result<Self, TokenModelError> {
        Ok(Self::new(read_jsonl(reader)?))
    }

    pub fn from_jsonl_path(path: impl AsRef<Path>) -> Result<Self, TokenModelError> {
        Self::from_jsonl_reader(std::fs::File::open(path)?)
    }
}

impl Labeler for OracleLabeler {
    fn label_and_tag(&self, query: &str, chunk: &Chunk) -> Result<LabelOutcome, TokenModelError> {
        let key = (query.to_string(), chunk.id.clone());
        match self.annotations.get(&key) {
            Some((tag, indices)) => {
                let tokens = tokenize_words(&chunk.text);
                let mut mask = vec![false; tokens.len()];
                for &i in indices {
                    if i < mask.len() {
                        mask[i] = true;
                    }
                }
                Ok(LabelOutcome::from_mask(*tag, &chunk.text, mask))
            }
            None if self.fallback_terminate => Ok(LabelOutcome::terminate(&chunk.text)),
            None => Err(TokenModelError::AnnotationMissing {
                query: query.to_string(),
                chunk_id: chunk.id.clone(),
            }),
        }
    }
}

/// One filter fixture row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterFixture {
    pub query: String,
    #[serde(default)]
    pub info: Vec<String>,
    pub filtered_query: String,
}

/// What the oracle filter does with inputs outside its fixture table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterFallback {
    /// Return the query unchanged.
    PassThrough,
    /// Return an empty string (dead branch).
    Empty,
}

pub struct OracleFilter {
    table: HashMap<(String, Vec<String>), String>,
    fallback: FilterFallback,
}

impl OracleFilter {
    pub fn new(rows: Vec<FilterFixture>) -> Self {
        let table = rows
            .into_iter()
            .map(|r| ((r.query, r.info), r.filtered_query))
            .collect();
        OracleFilter {
            table,
            fallback: FilterFallback::PassThrough,
        }
    }

    pub fn with_fallback(mut self, fallback: FilterFallback) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn from_jsonl_reader<R: Read>(reader: R) -> Result<Self, TokenModelError> {
        Ok(Self::new(read_jsonl(reader)?))
    }

    pub fn from_jsonl_path(path: impl AsRef<Path>) -> Result<Self, TokenModelError> {
        Self::from_jsonl_reader(std::fs::File::open(path)?)
    }
}

impl QueryFilter for OracleFilter {
    fn filter_next_query(&self, input: &FilterInput) -> Result<String, TokenModelError> {
        let key = (input.query.clone(), input.info_spans.clone());
        match self.table.get(&key) {
            Some(out) => Ok(out.clone()),
            None => Ok(match self.fallback {
                FilterFallback::PassThrough => input.query.clone(),
                FilterFallback::Empty => String::new(),
            }),
        }
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: Read>(
    reader: R,
) -> Result<Vec<T>, TokenModelError> {
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|e| TokenModelError::Fixture {
                line: lineno + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Model adapter (HTTP endpoint)
// ---------------------------------------------------------------------------

/// Adapter for a trained dual-head token classifier served over HTTP.
///
/// `POST {endpoint}/label` with `{"query", "chunk_id", "chunk_text"}`
/// returns `{"tag": "continue"|"terminate", "word_mask": [bool,..]}` where
/// the mask is aligned to this crate's word tokenization of `chunk_text`.
/// `POST {endpoint}/filter` with `{"query", "info_spans"}` returns
/// `{"filtered_query": "..."}`.
pub struct HttpModelAdapter {
    endpoint: String,
    http: reqwest::blocking::Client,
    timeout: Duration,
}

impl HttpModelAdapter {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, TokenModelError> {
        let http = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| TokenModelError::InferenceFailure(e.to_string()))?;
        Ok(HttpModelAdapter {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            http,
            timeout: Duration::from_secs(30),
        })
    }

    fn post<B: Serialize, T: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, TokenModelError> {
        let url = format!("{}/{}", self.endpoint, path);
        let response = self
            .http
            .post(&url)
            .timeout(self.timeout)
            .json(body)
            .send()
            .map_err(|e| TokenModelError::InferenceFailure(e.to_string()))?;
        if !response.status().is_success() {
            return Err(TokenModelError::InferenceFailure(format!(
                "{url} returned {}",
                response.status()
            )));
        }
        response
            .json()
            .map_err(|e| TokenModelError::InferenceFailure(e.to_string()))
    }
}

#[derive(Serialize)]
struct LabelRequest<'a> {
    query: &'a str,
    chunk_id: &'a str,
    chunk_text: &'a str,
}

#[derive(Deserialize)]
struct LabelResponse {
    tag: ChunkTag,
    word_mask: Vec<bool>,
}

#[derive(Deserialize)]
struct FilterResponse {
    filtered_query: String,
}

impl Labeler for HttpModelAdapter {
    fn label_and_tag(&self, query: &str, chunk: &Chunk) -> Result<LabelOutcome, TokenModelError> {
        let response: LabelResponse = self.post(
            "label",
            &LabelRequest {
                query,
                chunk_id: &chunk.id,
                chunk_text: &chunk.text,
            },
        )?;
        let expected = tokenize_words(&chunk.text).len();
        if response.word_mask.len() != expected {
            return Err(TokenModelError::InferenceFailure(format!(
                "word_mask has {} entries, chunk has {} words",
                response.word_mask.len(),
                expected
            )));
        }
        Ok(LabelOutcome::from_mask(
            response.tag,
            &chunk.text,
            response.word_mask,
        ))
    }
}

impl QueryFilter for HttpModelAdapter {
    fn filter_next_query(&self, input: &FilterInput) -> Result<String, TokenModelError> {
        let response: FilterResponse = self.post("filter", input)?;
        Ok(response.filtered_query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KGOT_QUERY: &str =
        "How large is the shopping mall where KGOT radio station has its studios?";
    const KGOT_CHUNK: &str = "KGOT, branded 106.5 KGOT, is a radio station in Anchorage with studios located in the Dimond Center mall.";

    fn kgot_fixture() -> OracleLabeler {
        // indices hand-derived from the tokenization of KGOT_CHUNK:
        // [KGOT][,][branded][106.5][KGOT][,][is][a][radio][station][in]
        // [Anchorage][with][studios][located][in][the][Dimond][Center][mall][.]
        OracleLabeler::new(vec![LabelerFixture {
            query: KGOT_QUERY.to_string(),
            chunk_id: "kgot".to_string(),
            tag: ChunkTag::Continue,
            labeled_words: vec![0, 1, 15, 16, 17, 18],
        }])
    }

    #[test]
    fn figure_style_span_reproduced() {
        let labeler = kgot_fixture();
        let chunk = Chunk::new("kgot", KGOT_CHUNK);
        let out = labeler.label_and_tag(KGOT_QUERY, &chunk).unwrap();
        assert_eq!(out.tag, ChunkTag::Continue);
        assert_eq!(out.span_text, "KGOT, in the Dimond Center");
        assert_eq!(out.word_mask.len(), tokenize_words(KGOT_CHUNK).len());
    }

    #[test]
    fn unknown_pair_is_missing_when_strict() {
        let labeler = kgot_fixture();
        let chunk = Chunk::new("other", "something unrelated entirely.");
        assert!(matches!(
            labeler.label_and_tag(KGOT_QUERY, &chunk).unwrap_err(),
            TokenModelError::AnnotationMissing { .. }
        ));
    }

    #[test]
    fn fallback_tags_terminate() {
        let labeler = kgot_fixture().with_fallback_terminate();
        let chunk = Chunk::new("other", "off topic text here.");
        let out = labeler.label_and_tag(KGOT_QUERY, &chunk).unwrap();
        assert_eq!(out.tag, ChunkTag::Terminate);
        assert!(out.word_mask.iter().all(|&b| !b));
        assert!(out.span_text.is_empty());
    }

    #[test]
    fn filter_input_renders_figure_format() {
        let input = FilterInput::new(
            KGOT_QUERY,
            vec!["KGOT, in the Dimond Center".to_string()],
        );
        assert_eq!(
            input.render(),
            "Q: How large is the shopping mall where KGOT radio station has its studios? \
             Info: KGOT, in the Dimond Center"
        );
    }

    #[test]
    fn oracle_filter_table_and_passthrough() {
        let filter = OracleFilter::new(vec![FilterFixture {
            query: KGOT_QUERY.to_string(),
            info: vec!["KGOT, in the Dimond Center".to_string()],
            filtered_query: "How large is Dimond Center?".to_string(),
        }]);
        let hit = filter
            .filter_next_query(&FilterInput::new(
                KGOT_QUERY,
                vec!["KGOT, in the Dimond Center".to_string()],
            ))
            .unwrap();
        assert_eq!(hit, "How large is Dimond Center?");
        // pass-through on empty info
        let miss = filter
            .filter_next_query(&FilterInput::new("plain question?", vec![]))
            .unwrap();
        assert_eq!(miss, "plain question?");
    }

    #[test]
    fn oracle_filter_empty_fallback() {
        let filter = OracleFilter::new(vec![]).with_fallback(FilterFallback::Empty);
        let out = filter
            .filter_next_query(&FilterInput::new("q", vec!["info".to_string()]))
            .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn fixtures_load_from_jsonl() {
        let data = concat!(
            r#"{"query":"q1","chunk_id":"c1","tag":"continue","labeled_words":[0,2]}"#,
            "\n",
            r#"{"query":"q1","chunk_id":"c2","tag":"terminate"}"#,
            "\n"
        );
        let labeler = OracleLabeler::from_jsonl_reader(data.as_bytes()).unwrap();
        let chunk = Chunk::new("c1", "alpha beta gamma");
        let out = labeler.label_and_tag("q1", &chunk).unwrap();
        assert_eq!(out.word_mask, vec![true, false, true]);
        assert_eq!(out.span_text, "alpha gamma");
    }

    #[test]
    fn bad_fixture_line_reported() {
        match OracleLabeler::from_jsonl_reader("oops".as_bytes()) {
            Err(TokenModelError::Fixture { line: 1, .. }) => {}
            Err(other) => panic!("unexpected error: {other}"),
            Ok(_) => panic!("malformed fixture must be rejected"),
        }
    }
}
