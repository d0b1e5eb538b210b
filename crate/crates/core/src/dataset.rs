//! Question datasets: JSONL rows with `id`, `question`, `answer`,
//! `oracle_chunk_ids`, and optionally a gold decomposition keyed by
//! sub-question number.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusError;

/// Gold sub-question entry, shaped exactly like the decomposition prompt's
/// JSON values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuestionSpec {
    pub sub_question: String,
    pub answer: String,
    #[serde(default)]
    pub dependency: Vec<String>,
    pub document: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub oracle_chunk_ids: Vec<String>,
    /// Optional gold decomposition; when present the synthesis pipeline
    /// uses it instead of calling the LLM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<BTreeMap<String, SubQuestionSpec>>,
}

impl DatasetRow {
    pub fn oracle_ids(&self) -> HashSet<String> {
        self.oracle_chunk_ids.iter().cloned().collect()
    }
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<DatasetRow>, CorpusError> {
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(rows)
}

pub fn read_dataset_path(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>, CorpusError> {
    read_dataset(std::fs::File::open(path)?)
}
