//! Symbolic-query diagnostics: was the query entity linked to the gold id, was
//! the gold relation used with it, and was the gold id at least a candidate.

use serde::{Deserialize, Serialize};

use crate::kb::Triple;
use crate::orchestrator::{LinkAttempt, PipelineTrace};
use crate::sparql::{parse, Term};

use super::benchmark::BenchmarkRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkOutcome {
    pub qid: bool,
    pub qid_rel: bool,
    pub qid_star: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SparqlDiagnostics {
    pub examples: usize,
    pub qid_rate: f64,
    pub qid_rel_rate: f64,
    pub qid_star_rate: f64,
}

/// Scores one link attempt against the gold triple of a KB hop; the gold
/// entity is the triple's subject.
pub fn link_outcome(attempt: Option<&LinkAttempt>, gold: &Triple) -> LinkOutcome {
    let Some(attempt) = attempt else {
        return LinkOutcome::default();
    };
    let qid = attempt.result.chosen == Some(gold.subject);
    let qid_rel = qid
        && attempt
            .repaired_sparql
            .as_deref()
            .and_then(|s| parse(s).ok())
            .is_some_and(|q| {
                q.patterns.iter().any(|p| {
                    p.subject == Term::Entity(gold.subject) && p.predicate == Term::Relation(gold.predicate)
                })
            });
    let qid_star = attempt.result.contains(gold.subject);
    LinkOutcome { qid, qid_rel, qid_star }
}

pub fn summarize(outcomes: &[LinkOutcome]) -> SparqlDiagnostics {
    let n = outcomes.len();
    if n == 0 {
        return SparqlDiagnostics::default();
    }
    let rate = |f: fn(&LinkOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / n as f64;
    SparqlDiagnostics {
        examples: n,
        qid_rate: rate(|o| o.qid),
        qid_rel_rate: rate(|o| o.qid_rel),
        qid_star_rate: rate(|o| o.qid_star),
    }
}

/// The link attempt the diagnostics judge for a record: the first one made in
/// the record's KB hop.
pub fn judged_attempt<'t>(trace: &'t PipelineTrace, record: &BenchmarkRecord) -> Option<&'t LinkAttempt> {
    let (hop, _) = record.kb_hop()?;
    trace.hops.iter().find(|h| h.hop == hop).and_then(|h| h.links.first())
}

/// Per-record outcome, or `None` when the record has no gold KB triple.
pub fn record_outcome(trace: &PipelineTrace, record: &BenchmarkRecord) -> Option<LinkOutcome> {
    let (_, gold) = record.kb_hop()?;
    let triple = gold.gold_triple.as_ref()?;
    Some(link_outcome(judged_attempt(trace, record), triple))
}

/// Rates over every record with a gold KB triple. Traces are matched to
/// records by id.
pub fn sparql_diagnostics(traces: &[PipelineTrace], records: &[BenchmarkRecord]) -> SparqlDiagnostics {
    let outcomes: Vec<LinkOutcome> = records
        .iter()
        .filter_map(|r| {
            let trace = traces.iter().find(|t| t.id.as_deref() == Some(r.id.as_str()));
            match trace {
                Some(t) => record_outcome(t, r),
                None => r.kb_hop().and_then(|(_, h)| h.gold_triple.as_ref()).map(|_| LinkOutcome::default()),
            }
        })
        .collect();
    summarize(&outcomes)
}
