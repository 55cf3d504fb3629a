//! Benchmark loading, answer metrics, per-hop retrieval accuracy, link
//! diagnostics and report rendering.

mod benchmark;
mod diagnostics;
mod metrics;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use benchmark::{load_benchmark, write_benchmark, BenchmarkRecord, HopGold, HopSource, QType};
pub use diagnostics::{
    judged_attempt, link_outcome, record_outcome, sparql_diagnostics, summarize, LinkOutcome, SparqlDiagnostics,
};
pub use metrics::{exact_match, f1, normalize, recall_substring};
pub use report::{evaluate_run, EvalReport, QTypeSummary, RecordVerdict, Summary};

use crate::kb::KbError;
use crate::orchestrator::{passage_evidence, KnowledgeSources, Mode, OrchestratorError, Pipeline, PipelineTrace};
use crate::rerank::{EvidenceCandidate, EvidenceSource, RankedContext};
use crate::sparql::{evaluate, parse, render_evidence};
use crate::text_index::{linearize, triple_passage_id};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Load(#[from] KbError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("no trace for record {0}")]
    MissingTrace(String),
    #[error("benchmark is empty")]
    EmptyBenchmark,
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
}

/// Context items that count for hop `j`. Single-step modes retrieve once for
/// the whole question, so every hop is judged against all of their context.
fn hop_items(trace: &PipelineTrace, j: usize) -> Vec<&EvidenceCandidate> {
    if trace.mode == Mode::Detllm {
        trace
            .hops
            .iter()
            .filter(|h| h.hop == j)
            .flat_map(|h| &h.context.items)
            .collect()
    } else {
        trace.hops.iter().flat_map(|h| &h.context.items).collect()
    }
}

/// Whether the retained hop-`j` context holds the gold passage, the gold
/// triple, the gold query, or a query result that includes the gold
/// sub-answer.
pub fn hop_retrieval_hit(trace: &PipelineTrace, gold: &HopGold, j: usize) -> bool {
    let triple_key = gold.gold_triple.as_ref().map(triple_passage_id);
    let sparql_key = gold
        .gold_sparql
        .as_deref()
        .and_then(|s| parse(s).ok())
        .map(|q| format!("sparql:{q}"));
    let sub_answer = normalize(&gold.sub_answer);
    hop_items(trace, j).into_iter().any(|item| {
        gold.gold_passage_id.as_deref() == Some(item.key.as_str())
            || triple_key.as_deref() == Some(item.key.as_str())
            || sparql_key.as_deref() == Some(item.key.as_str())
            || (item.source == EvidenceSource::Sparql
                && !sub_answer.is_empty()
                && item
                    .invocation
                    .and_then(|i| trace.invocations.get(i))
                    .is_some_and(|inv| inv.answers.iter().any(|a| normalize(a) == sub_answer)))
    })
}

/// Gold evidence for oracle runs, one single-item context per hop.
pub fn gold_contexts(record: &BenchmarkRecord, sources: &KnowledgeSources) -> Result<Vec<RankedContext>, EvalError> {
    let store = sources.store();
    let invalid = |reason: String| EvalError::InvalidRecord {
        id: record.id.clone(),
        reason,
    };
    record
        .hops
        .iter()
        .map(|hop| {
            let item = if let Some(text) = &hop.gold_sparql {
                let q = parse(text).map_err(|e| invalid(e.to_string()))?;
                let canonical = q.to_string();
                EvidenceCandidate {
                    key: format!("sparql:{canonical}"),
                    text: render_evidence(&evaluate(&q, store), &q, store).join("; "),
                    source: EvidenceSource::Sparql,
                    originating_query: hop.sub_question.clone(),
                    provenance: Some(canonical),
                    invocation: None,
                    relevance: Some(1.0),
                }
            } else if let Some(id) = &hop.gold_passage_id {
                let p = sources
                    .passage(id)
                    .ok_or_else(|| invalid(format!("unknown passage {id:?}")))?;
                let (text, source) = passage_evidence(p);
                EvidenceCandidate {
                    key: p.id.clone(),
                    text,
                    source,
                    originating_query: hop.sub_question.clone(),
                    provenance: None,
                    invocation: None,
                    relevance: Some(1.0),
                }
            } else if let Some(t) = &hop.gold_triple {
                let p = linearize(t, store);
                EvidenceCandidate {
                    key: p.id,
                    text: p.body,
                    source: EvidenceSource::SparseKb,
                    originating_query: hop.sub_question.clone(),
                    provenance: None,
                    invocation: None,
                    relevance: Some(1.0),
                }
            } else {
                return Err(invalid("hop without gold evidence".into()));
            };
            Ok(RankedContext {
                question: hop.sub_question.clone(),
                scorer: "gold".into(),
                items: vec![item],
            })
        })
        .collect()
}

/// Answers every record, `parallel` questions at a time. Traces come back in
/// record order with their ids set.
pub fn run_benchmark(
    pipeline: &Pipeline<'_>,
    records: &[BenchmarkRecord],
    parallel: usize,
) -> Result<Vec<PipelineTrace>, EvalError> {
    let answer_one = |r: &BenchmarkRecord| -> Result<PipelineTrace, EvalError> {
        let mut trace = if pipeline.config().mode == Mode::Oracle {
            pipeline.answer_with_gold(&r.question, gold_contexts(r, pipeline.sources())?)
        } else {
            pipeline.answer(&r.question)?
        };
        trace.id = Some(r.id.clone());
        Ok(trace)
    };
    let workers = parallel.max(1).min(records.len().max(1));
    if workers == 1 {
        return records.iter().map(answer_one).collect();
    }
    let mut slots: Vec<Option<Result<PipelineTrace, EvalError>>> = (0..records.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let answer_one = &answer_one;
                s.spawn(move || {
                    records
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(workers)
                        .map(|(i, r)| (i, answer_one(r)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, result) in h.join().expect("evaluation worker panicked") {
                slots[i] = Some(result);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every record answered")).collect()
}
