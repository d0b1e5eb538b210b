//! Side-by-side retrieval strategies: direct top-K retrieval, one-shot
//! LLM decomposition, and the iterative hop engine — all producing
//! comparable per-row metrics and a macro-averaged report.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{self, CandidatePool, EngineConfig, HopTrace, PoolEntry};
use crate::index::Retriever;
use crate::labeler::{Labeler, QueryFilter};
use crate::llm::prompts::DatasetId;
use crate::llm::{judge, parse_json_object, render_prompt, LlmGateway, LlmRequest};
use crate::metrics::{
    aggregate, exact_match, recall_at_k, token_f1, AggregateReport, EvalRow,
};
use crate::dataset::DatasetRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    /// One retrieval with the original question, top-K chunks.
    DirectR,
    /// One LLM decomposition call, then one retrieval per sub-question.
    OneshotDecompose,
    /// The hop engine: iterative retrieval without per-hop LLM calls.
    EfficientIterative,
}

impl StrategyId {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" | "direct_r" | "direct-r" => Some(StrategyId::DirectR),
            "oneshot" | "oneshot_decompose" | "decompose" => Some(StrategyId::OneshotDecompose),
            "iterative" | "efficient_iterative" | "efficient" => {
                Some(StrategyId::EfficientIterative)
            }
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyId::DirectR => "direct_r",
            StrategyId::OneshotDecompose => "oneshot_decompose",
            StrategyId::EfficientIterative => "efficient_iterative",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub dataset_id: DatasetId,
    /// K for the direct strategy.
    pub direct_k: usize,
    /// Per-sub-question K for the one-shot strategy.
    pub oneshot_k_per_subq: usize,
    pub engine: EngineConfig,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            dataset_id: DatasetId::Hotpotqa,
            direct_k: 10,
            oneshot_k_per_subq: 4,
            engine: EngineConfig::default(),
        }
    }
}

/// Wiring for a strategy run. The labeler/filter pair is only required by
/// the iterative strategy; the judge gateway is optional everywhere.
pub struct EvalComponents<'a> {
    pub retriever: &'a dyn Retriever,
    pub labeler: Option<&'a dyn Labeler>,
    pub filter: Option<&'a dyn QueryFilter>,
    pub generator: &'a LlmGateway,
    pub judge: Option<&'a LlmGateway>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: StrategyId,
    pub rows: Vec<EvalRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<AggregateReport>,
    pub failures: Vec<RowFailure>,
}

/// Full per-question record written to the trace file by `run` commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: String,
    pub question: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    pub prediction: String,
    pub pool: Vec<PoolEntry>,
    pub latency_s: f64,
    pub trace: HopTrace,
}

/// Evaluate one strategy over a dataset. Row failures are recorded, not
/// fatal.
pub fn run_strategy(
    strategy: StrategyId,
    dataset: &[DatasetRow],
    components: &EvalComponents,
    config: &StrategyConfig,
) -> StrategyReport {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for row in dataset {
        match eval_row(strategy, row, components, config) {
            Ok(r) => rows.push(r),
            Err(e) => failures.push(RowFailure {
                id: row.id.clone(),
                error: e,
            }),
        }
    }
    let aggregate = aggregate(&rows).ok();
    StrategyReport {
        strategy,
        rows,
        aggregate,
        failures,
    }
}

fn eval_row(
    strategy: StrategyId,
    row: &DatasetRow,
    components: &EvalComponents,
    config: &StrategyConfig,
) -> Result<EvalRow, String> {
    let started = Instant::now();
    let calls_before = components.generator.counts().calls;

    let (prediction, retrieved, iterations) = match strategy {
        StrategyId::DirectR => {
            let hits = components
                .retriever
                .retrieve(&row.question, config.direct_k, &HashSet::new())
                .map_err(|e| e.to_string())?;
            let pool = pool_from_hits(&hits);
            let prediction = answer_over_pool(row, &pool, components, config)?;
            let ids = hits.into_iter().map(|h| h.chunk_id).collect();
            (prediction, ids, 0)
        }
        StrategyId::OneshotDecompose => {
            let sub_questions = oneshot_decompose(&row.question, components)?;
            let mut seen = HashSet::new();
            let mut ordered = Vec::new();
            let mut pool = CandidatePool::default();
            for sub_q in &sub_questions {
                let hits = components
                    .retriever
                    .retrieve(sub_q, config.oneshot_k_per_subq, &HashSet::new())
                    .map_err(|e| e.to_string())?;
                for hit in hits {
                    if seen.insert(hit.chunk_id.clone()) {
                        ordered.push(hit.chunk_id.clone());
                        pool.admit(PoolEntry {
                            chunk_id: hit.chunk_id,
                            score: hit.score,
                            depth: 0,
                        });
                    }
                }
            }
            let prediction = answer_over_pool(row, &pool, components, config)?;
            (prediction, ordered, 0)
        }
        StrategyId::EfficientIterative => {
            let labeler = components
                .labeler
                .ok_or_else(|| "iterative strategy requires a labeler".to_string())?;
            let filter = components
                .filter
                .ok_or_else(|| "iterative strategy requires a filter".to_string())?;
            let (pool, mut trace) = engine::run(
                &row.question,
                components.retriever,
                labeler,
                filter,
                &config.engine,
            )
            .map_err(|e| e.to_string())?;
            let prediction = engine::answer(
                &row.question,
                &pool,
                components.retriever,
                components.generator,
                config.dataset_id,
                &mut trace,
            )
            .map_err(|e| e.to_string())?;
            let retrieved = trace.tagged_chunk_ids.clone();
            (prediction, retrieved, trace.iterations_run)
        }
    };

    let llm_calls = (components.generator.counts().calls - calls_before) as u32;
    let recall = recall_at_k::<f64>(&retrieved, &row.oracle_ids()).map_err(|e| e.to_string())?;
    let acc = match components.judge {
        Some(jgw) => Some(
            judge(jgw, &row.question, &prediction, &row.answer)
                .map(|v| u8::from(v.correct))
                .map_err(|e| e.to_string())?,
        ),
        None => None,
    };
    Ok(EvalRow {
        id: row.id.clone(),
        em: exact_match(&prediction, &row.answer),
        f1: token_f1(&prediction, &row.answer),
        acc,
        recall_at_k: recall,
        k_used: retrieved.len() as f64,
        llm_calls,
        iterations,
        latency_s: started.elapsed().as_secs_f64(),
        prediction,
    })
}

fn pool_from_hits(hits: &[crate::index::RetrievalHit]) -> CandidatePool {
    let mut pool = CandidatePool::default();
    for hit in hits {
        pool.admit(PoolEntry {
            chunk_id: hit.chunk_id.clone(),
            score: hit.score,
            depth: 0,
        });
    }
    pool
}

fn answer_over_pool(
    row: &DatasetRow,
    pool: &CandidatePool,
    components: &EvalComponents,
    config: &StrategyConfig,
) -> Result<String, String> {
    let mut scratch = HopTrace::default();
    engine::answer(
        &row.question,
        pool,
        components.retriever,
        components.generator,
        config.dataset_id,
        &mut scratch,
    )
    .map_err(|e| e.to_string())
}

fn oneshot_decompose(
    question: &str,
    components: &EvalComponents,
) -> Result<Vec<String>, String> {
    let vars: BTreeMap<&str, &str> = [("question", question)].into_iter().collect();
    let prompt = render_prompt("baseline.decompose", &vars).map_err(|e| e.to_string())?;
    let raw = components
        .generator
        .complete(&LlmRequest::new(prompt))
        .map_err(|e| e.to_string())?;
    let map = parse_json_object(&raw, &["decomposed_questions"]).map_err(|e| e.to_string())?;
    let subs: Vec<String> =
        serde_json::from_value(map["decomposed_questions"].clone()).map_err(|e| e.to_string())?;
    if subs.is_empty() {
        return Err("decomposition returned no sub-questions".to_string());
    }
    Ok(subs)
}

/// Run the iterative engine over a dataset, producing full trace records
/// (the `run` command's output).
pub fn run_dataset_traces(
    dataset: &[DatasetRow],
    retriever: &dyn Retriever,
    labeler: &dyn Labeler,
    filter: &dyn QueryFilter,
    generator: &LlmGateway,
    config: &StrategyConfig,
) -> (Vec<TraceRecord>, Vec<RowFailure>) {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for row in dataset {
        let started = Instant::now();
        let result = engine::run(&row.question, retriever, labeler, filter, &config.engine)
            .and_then(|(pool, mut trace)| {
                let prediction = engine::answer(
                    &row.question,
                    &pool,
                    retriever,
                    generator,
                    config.dataset_id,
                    &mut trace,
                )?;
                Ok((pool, trace, prediction))
            });
        match result {
            Ok((pool, trace, prediction)) => records.push(TraceRecord {
                id: row.id.clone(),
                question: row.question.clone(),
                gold_answer: Some(row.answer.clone()),
                prediction,
                pool: pool.entries().to_vec(),
                latency_s: started.elapsed().as_secs_f64(),
                trace,
            }),
            Err(e) => failures.push(RowFailure {
                id: row.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    (records, failures)
}

/// Score previously written trace records against the dataset's gold
/// answers and oracle chunks.
pub fn eval_from_traces(
    records: &[TraceRecord],
    dataset: &[DatasetRow],
    judge_gateway: Option<&LlmGateway>,
) -> StrategyReport {
    let by_id: BTreeMap<&str, &DatasetRow> =
        dataset.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for record in records {
        let Some(row) = by_id.get(record.id.as_str()) else {
            failures.push(RowFailure {
                id: record.id.clone(),
                error: "trace id not present in dataset".to_string(),
            });
            continue;
        };
        let recall = match recall_at_k::<f64>(&record.trace.tagged_chunk_ids, &row.oracle_ids()) {
            Ok(r) => r,
            Err(e) => {
                failures.push(RowFailure {
                    id: record.id.clone(),
                    error: e.to_string(),
                });
                continue;
            }
        };
        let acc = match judge_gateway {
            Some(jgw) => match judge(jgw, &row.question, &record.prediction, &row.answer) {
                Ok(v) => Some(u8::from(v.correct)),
                Err(e) => {
                    failures.push(RowFailure {
                        id: record.id.clone(),
                        error: e.to_string(),
                    });
                    continue;
                }
            },
            None => None,
        };
        rows.push(EvalRow {
            id: record.id.clone(),
            prediction: record.prediction.clone(),
            em: exact_match(&record.prediction, &row.answer),
            f1: token_f1(&record.prediction, &row.answer),
            acc,
            recall_at_k: recall,
            k_used: record.trace.tagged_chunk_ids.len() as f64,
            llm_calls: record.trace.generator_llm_calls,
            iterations: record.trace.iterations_run,
            latency_s: record.latency_s,
        });
    }
    let aggregate = aggregate(&rows).ok();
    StrategyReport {
        strategy: StrategyId::EfficientIterative,
        rows,
        aggregate,
        failures,
    }
}

/// CSV rendering of aggregate reports, one line per strategy.
pub fn reports_to_csv(reports: &[StrategyReport]) -> String {
    let mut out = String::from(
        "strategy,rows,em,f1,acc,recall_at_k,k_used,llm_calls,iterations,latency_s\n",
    );
    for report in reports {
        let Some(agg) = &report.aggregate else {
            continue;
        };
        let acc = agg
            .acc
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{},{:.4},{:.2},{:.2},{:.2},{:.4}\n",
            report.strategy.as_str(),
            agg.rows,
            agg.em,
            agg.f1,
            acc,
            agg.recall_at_k,
            agg.k_used,
            agg.llm_calls,
            agg.iterations,
            agg.latency_s
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Chunk, ChunkStore};
    use crate::embed::HashedBowEmbedder;
    use crate::index::DenseIndex;
    use crate::labeler::{
        ChunkTag, FilterFixture, LabelerFixture, OracleFilter, OracleLabeler,
    };
    use crate::llm::mock::MockClient;
    use std::sync::Arc;

    const QUESTION: &str = "What year was the artist who recorded Starlight Tape born?";
    const HOP2: &str = "What year was Mira Vey born?";

    /// Two-hop fixture where the second-hop evidence shares no vocabulary
    /// with the question (rankings verified against the embedder oracle).
    fn fixture_index() -> DenseIndex<f64> {
        let store = ChunkStore::ingest(vec![
            Chunk::new("hop1", "Starlight Tape was recorded by the artist Mira Vey."),
            Chunk::new("hop2", "Mira Vey entered this world in 1984, raised beside Lake Sevan."),
            Chunk::new("n1", "The gallery exhibited a retrospective of modern sculpture last spring."),
            Chunk::new("n2", "A starlight festival happens near the coast each summer."),
            Chunk::new("n3", "Magnetic tape degrades when stored in humid basements."),
            Chunk::new("n4", "Farmers in the valley rotate crops every second year."),
        ])
        .unwrap();
        DenseIndex::build(store, Arc::new(HashedBowEmbedder::default())).unwrap()
    }

    fn fixture_labeler() -> OracleLabeler {
        OracleLabeler::new(vec![
            LabelerFixture {
                query: QUESTION.to_string(),
                chunk_id: "hop1".to_string(),
                tag: ChunkTag::Continue,
                // "Starlight Tape Mira Vey"
                labeled_words: vec![0, 1, 7, 8],
            },
            LabelerFixture {
                query: HOP2.to_string(),
                chunk_id: "hop2".to_string(),
                tag: ChunkTag::Continue,
                // "Mira Vey 1984"
                labeled_words: vec![0, 1, 6],
            },
        ])
        .with_fallback_terminate()
    }

    fn fixture_filter() -> OracleFilter {
        OracleFilter::new(vec![
            FilterFixture {
                query: QUESTION.to_string(),
                info: vec!["Starlight Tape Mira Vey".to_string()],
                filtered_query: HOP2.to_string(),
            },
            FilterFixture {
                query: HOP2.to_string(),
                info: vec!["Mira Vey 1984".to_string()],
                filtered_query: String::new(),
            },
        ])
    }

    fn dataset() -> Vec<DatasetRow> {
        vec![DatasetRow {
            id: "q1".into(),
            question: QUESTION.into(),
            answer: "1984".into(),
            oracle_chunk_ids: vec!["hop1".into(), "hop2".into()],
            decomposition: None,
        }]
    }

    fn generator() -> LlmGateway {
        LlmGateway::new(Arc::new(MockClient::fixed(r#"{"answer": "1984"}"#)))
    }

    #[test]
    fn direct_strategy_counts_one_call() {
        let index = fixture_index();
        let gw = generator();
        let components = EvalComponents {
            retriever: &index,
            labeler: None,
            filter: None,
            generator: &gw,
            judge: None,
        };
        let config = StrategyConfig {
            direct_k: 2,
            ..StrategyConfig::default()
        };
        let report = run_strategy(StrategyId::DirectR, &dataset(), &components, &config);
        assert!(report.failures.is_empty());
        let row = &report.rows[0];
        assert_eq!(row.llm_calls, 1);
        assert_eq!(row.k_used, 2.0);
        assert_eq!(row.em, 1);
    }

    #[test]
    fn oneshot_strategy_counts_two_calls() {
        let index = fixture_index();
        let decompose_response = r#"```json
{"decomposed_questions": ["Who recorded Starlight Tape?", "What year was the artist born?"]}
```"#;
        // first call decomposes, second answers
        let client = MockClient::sequence(vec![
            decompose_response.to_string(),
            r#"{"answer": "1984"}"#.to_string(),
        ]);
        let gw = LlmGateway::new(Arc::new(client));
        let components = EvalComponents {
            retriever: &index,
            labeler: None,
            filter: None,
            generator: &gw,
            judge: None,
        };
        let config = StrategyConfig {
            oneshot_k_per_subq: 2,
            ..StrategyConfig::default()
        };
        let report = run_strategy(
            StrategyId::OneshotDecompose,
            &dataset(),
            &components,
            &config,
        );
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        let row = &report.rows[0];
        assert_eq!(row.llm_calls, 2);
        assert!(row.k_used >= 2.0);
    }

    #[test]
    fn iterative_strategy_counts_one_call_and_wins_recall() {
        let index = fixture_index();
        let gw = generator();
        let labeler = fixture_labeler();
        let filter = fixture_filter();
        let components = EvalComponents {
            retriever: &index,
            labeler: Some(&labeler),
            filter: Some(&filter),
            generator: &gw,
            judge: None,
        };
        let config = StrategyConfig {
            direct_k: 2,
            engine: EngineConfig {
                k_per_hop: 1,
                ..EngineConfig::default()
            },
            ..StrategyConfig::default()
        };
        let report = run_strategy(
            StrategyId::EfficientIterative,
            &dataset(),
            &components,
            &config,
        );
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        let row = &report.rows[0];
        assert_eq!(row.llm_calls, 1);
        assert_eq!(row.recall_at_k, 1.0);
        assert!(row.iterations >= 2);
    }

    #[test]
    fn judge_populates_acc() {
        let index = fixture_index();
        let gw = generator();
        let judge_gw = LlmGateway::new(Arc::new(MockClient::fixed(r#"{"response":"yes"}"#)));
        let components = EvalComponents {
            retriever: &index,
            labeler: None,
            filter: None,
            generator: &gw,
            judge: Some(&judge_gw),
        };
        let config = StrategyConfig::default();
        let report = run_strategy(StrategyId::DirectR, &dataset(), &components, &config);
        assert_eq!(report.rows[0].acc, Some(1));
        assert_eq!(report.aggregate.as_ref().unwrap().acc, Some(1.0));
    }

    #[test]
    fn csv_has_one_line_per_strategy() {
        let report = StrategyReport {
            strategy: StrategyId::DirectR,
            rows: vec![],
            aggregate: Some(AggregateReport {
                rows: 2,
                em: 0.5,
                f1: 0.75,
                acc: None,
                recall_at_k: 1.0,
                k_used: 4.0,
                llm_calls: 1.0,
                iterations: 0.0,
                latency_s: 0.01,
            }),
            failures: vec![],
        };
        let csv = reports_to_csv(&[report]);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("strategy,"));
        assert!(lines.next().unwrap().starts_with("direct_r,2,0.5000,0.7500,-,"));
    }
}
