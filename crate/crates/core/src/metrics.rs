//! Answer and retrieval metrics: normalization, exact match, token F1,
//! recall@K, and macro aggregation.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("oracle chunk set is empty")]
    EmptyOracle,
    #[error("no rows to aggregate")]
    EmptyRows,
}

/// SQuAD-style answer normalization: lowercase, delete punctuation, drop
/// the articles a/an/the, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn normalized_tokens(text: &str) -> Vec<String> {
    normalize_answer(text)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// 1 when the normalized strings are identical, else 0.
pub fn exact_match(prediction: &str, gold: &str) -> u8 {
    u8::from(normalize_answer(prediction) == normalize_answer(gold))
}

/// Token-multiset F1 over normalized tokens.
///
/// Both sides empty scores 1; one side empty scores 0.
pub fn token_f1<S: Scalar>(prediction: &str, gold: &str) -> S {
    let pred = normalized_tokens(prediction);
    let gold = normalized_tokens(gold);
    if pred.is_empty() && gold.is_empty() {
        return S::one();
    }
    if pred.is_empty() || gold.is_empty() {
        return S::zero();
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(n) = counts.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return S::zero();
    }
    let common = S::from_usize_lossy(common);
    let precision = common / S::from_usize_lossy(pred.len());
    let recall = common / S::from_usize_lossy(gold.len());
    let two = S::one() + S::one();
    two * precision * recall / (precision + recall)
}

/// Fraction of oracle chunks present in the retrieved list.
pub fn recall_at_k<S: Scalar>(
    retrieved_ids: &[String],
    oracle_ids: &HashSet<String>,
) -> Result<S, EvalError> {
    if oracle_ids.is_empty() {
        return Err(EvalError::EmptyOracle);
    }
    let retrieved: HashSet<&str> = retrieved_ids.iter().map(String::as_str).collect();
    let hit = oracle_ids
        .iter()
        .filter(|id| retrieved.contains(id.as_str()))
        .count();
    Ok(S::from_usize_lossy(hit) / S::from_usize_lossy(oracle_ids.len()))
}

/// Per-question evaluation record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub prediction: String,
    pub em: u8,
    pub f1: f64,
    /// Judge verdict when the judge ran for this row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<u8>,
    pub recall_at_k: f64,
    /// Chunks this row retrieved (averaged into the reported K).
    pub k_used: f64,
    pub llm_calls: u32,
    pub iterations: u32,
    pub latency_s: f64,
}

/// Macro averages over a row set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rows: usize,
    pub em: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    pub recall_at_k: f64,
    pub k_used: f64,
    pub llm_calls: f64,
    pub iterations: f64,
    pub latency_s: f64,
}

/// Unweighted macro averages; `acc` averages only the judged rows.
pub fn aggregate(rows: &[EvalRow]) -> Result<AggregateReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyRows);
    }
    let n = rows.len() as f64;
    let sum = |f: &dyn Fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>();
    let judged: Vec<u8> = rows.iter().filter_map(|r| r.acc).collect();
    Ok(AggregateReport {
        rows: rows.len(),
        em: sum(&|r| r.em as f64) / n,
        f1: sum(&|r| r.f1) / n,
        acc: if judged.is_empty() {
            None
        } else {
            Some(judged.iter().map(|&a| a as f64).sum::<f64>() / judged.len() as f64)
        },
        recall_at_k: sum(&|r| r.recall_at_k) / n,
        k_used: sum(&|r| r.k_used) / n,
        llm_calls: sum(&|r| r.llm_calls as f64) / n,
        iterations: sum(&|r| r.iterations as f64) / n,
        latency_s: sum(&|r| r.latency_s) / n,
    })
}
