use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::benchmark::{BenchmarkRecord, QType};
use super::diagnostics::{self, LinkOutcome, SparqlDiagnostics};
use super::metrics::{exact_match, f1, recall_substring};
use super::{hop_retrieval_hit, EvalError};
use crate::orchestrator::{Mode, PipelineTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordVerdict {
    pub id: String,
    pub qtype: QType,
    pub prediction: String,
    pub answers: Vec<String>,
    pub em: bool,
    pub f1: f64,
    pub recall: bool,
    pub h1: bool,
    pub h2: bool,
    pub llm_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTypeSummary {
    pub qtype: QType,
    pub records: usize,
    pub em: f64,
    pub f1: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub records: usize,
    pub em: f64,
    pub f1: f64,
    pub recall: f64,
    pub h1_r: f64,
    pub h2_r: f64,
    pub diagnostics: SparqlDiagnostics,
    pub by_qtype: Vec<QTypeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub llm_calls: usize,
    pub summary: Summary,
    /// Sorted by record id.
    pub verdicts: Vec<RecordVerdict>,
}

fn mean_of(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    // summing in sorted order keeps the mean independent of record order
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn share(flags: impl Iterator<Item = bool>) -> f64 {
    mean_of(flags.map(|b| if b { 1.0 } else { 0.0 }).collect())
}

pub fn evaluate_run(records: &[BenchmarkRecord], traces: &[PipelineTrace]) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    let by_id: BTreeMap<&str, &PipelineTrace> =
        traces.iter().filter_map(|t| t.id.as_deref().map(|id| (id, t))).collect();
    let mut verdicts = Vec::with_capacity(records.len());
    let mut link_outcomes = Vec::new();
    let mut mode = None;
    for r in records {
        let trace = by_id.get(r.id.as_str()).ok_or_else(|| EvalError::MissingTrace(r.id.clone()))?;
        mode.get_or_insert(trace.mode);
        let link = diagnostics::record_outcome(trace, r);
        link_outcomes.extend(link);
        verdicts.push(RecordVerdict {
            id: r.id.clone(),
            qtype: r.qtype,
            prediction: trace.answer.clone(),
            answers: r.answers.clone(),
            em: exact_match(&trace.answer, &r.answers),
            f1: f1(&trace.answer, &r.answers),
            recall: recall_substring(&trace.answer, &r.answers),
            h1: hop_retrieval_hit(trace, &r.hops[0], 1),
            h2: hop_retrieval_hit(trace, &r.hops[1], 2),
            llm_calls: trace.llm_call_count,
            link,
            errors: trace.errors.clone(),
        });
    }
    verdicts.sort_by(|a, b| a.id.cmp(&b.id));
    let by_qtype = QType::ALL
        .iter()
        .filter_map(|&q| {
            let group: Vec<&RecordVerdict> = verdicts.iter().filter(|v| v.qtype == q).collect();
            (!group.is_empty()).then(|| QTypeSummary {
                qtype: q,
                records: group.len(),
                em: share(group.iter().map(|v| v.em)),
                f1: mean_of(group.iter().map(|v| v.f1).collect()),
                recall: share(group.iter().map(|v| v.recall)),
            })
        })
        .collect();
    let summary = Summary {
        records: verdicts.len(),
        em: share(verdicts.iter().map(|v| v.em)),
        f1: mean_of(verdicts.iter().map(|v| v.f1).collect()),
        recall: share(verdicts.iter().map(|v| v.recall)),
        h1_r: share(verdicts.iter().map(|v| v.h1)),
        h2_r: share(verdicts.iter().map(|v| v.h2)),
        diagnostics: diagnostics::summarize(&link_outcomes),
        by_qtype,
    };
    Ok(EvalReport {
        mode: mode.unwrap_or(Mode::Detllm),
        llm_calls: verdicts.iter().map(|v| v.llm_calls).sum(),
        summary,
        verdicts,
    })
}

impl EvalReport {
    /// One JSON verdict per line.
    pub fn verdicts_jsonl(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            out.push_str(&serde_json::to_string(v).expect("verdict serializes"));
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text summary.
    pub fn table(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(out, "mode: {:?}  records: {}  llm calls: {}", self.mode, s.records, self.llm_calls);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<10} {:>7}", "metric", "value");
        let d = &s.diagnostics;
        for (name, value) in [
            ("EM", s.em),
            ("F1", s.f1),
            ("Recall", s.recall),
            ("H1-R", s.h1_r),
            ("H2-R", s.h2_r),
            ("QID", d.qid_rate),
            ("QID+REL", d.qid_rel_rate),
            ("QID*", d.qid_star_rate),
        ] {
            let _ = writeln!(out, "{name:<10} {value:>7.4}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<22} {:>3} {:>7} {:>7} {:>7}", "qtype", "n", "EM", "F1", "Recall");
        for q in &s.by_qtype {
            let _ = writeln!(
                out,
                "{:<22} {:>3} {:>7.4} {:>7.4} {:>7.4}",
                q.qtype.as_str(),
                q.records,
                q.em,
                q.f1,
                q.recall
            );
        }
        out
    }
}
