use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pipeline::{ComposedQuestion, Status};
use super::{DatagenError, RejectReason};
use crate::eval::BenchmarkRecord;

/// One row handed to an annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub record_id: String,
    /// Annotator slot, 0-based.
    pub slot: usize,
    /// Display position within the slot's queue.
    pub position: usize,
    pub question1: String,
    pub answer1: String,
    pub question2: String,
    pub answers2: Vec<String>,
    pub bridge: String,
    pub composed: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Accept,
    Revise,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub record_id: String,
    pub slot: usize,
    pub verdict: VerdictKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
}

/// Every record once per annotator slot, each slot in its own shuffled order.
pub fn export_tasks<R: Rng>(records: &[ComposedQuestion], annotators: usize, rng: &mut R) -> Vec<AnnotationTask> {
    let mut tasks = Vec::with_capacity(records.len() * annotators);
    for slot in 0..annotators {
        let mut order: Vec<&ComposedQuestion> = records.iter().collect();
        order.shuffle(rng);
        for (position, r) in order.into_iter().enumerate() {
            tasks.push(AnnotationTask {
                record_id: r.id.clone(),
                slot,
                position,
                question1: r.hop1.question.clone(),
                answer1: r.hop1.answer.clone(),
                question2: r.hop2.question.clone(),
                answers2: r.answers.clone(),
                bridge: r.bridge.clone(),
                composed: r.composed_text.clone(),
            });
        }
    }
    tasks
}

/// Applies annotator verdicts. Any rejection rejects the record; otherwise
/// a revision (lowest slot first) replaces the text; unanimous acceptance
/// accepts it. Records without verdicts keep their status.
pub fn import_verdicts(records: &mut [ComposedQuestion], verdicts: &[Verdict]) -> Result<(), DatagenError> {
    let index: BTreeMap<String, usize> = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
    let mut grouped: BTreeMap<usize, Vec<&Verdict>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for v in verdicts {
        let &i = index
            .get(&v.record_id)
            .ok_or_else(|| DatagenError::UnknownRecordId(v.record_id.clone()))?;
        let invalid = |reason: &str| DatagenError::InvalidVerdict {
            id: v.record_id.clone(),
            slot: v.slot,
            reason: reason.to_string(),
        };
        if !seen.insert((i, v.slot)) {
            return Err(invalid("duplicate verdict"));
        }
        if v.verdict == VerdictKind::Revise && v.revised_text.as_deref().is_none_or(|t| t.trim().is_empty()) {
            return Err(invalid("revise without text"));
        }
        grouped.entry(i).or_default().push(v);
    }
    for (i, mut group) in grouped {
        group.sort_by_key(|v| v.slot);
        let record = &mut records[i];
        if let Some(reject) = group.iter().find(|v| v.verdict == VerdictKind::Reject) {
            record.status = Status::Rejected;
            record.rejection = Some(reject.reason.unwrap_or(RejectReason::Other));
        } else if let Some(revise) = group.iter().find(|v| v.verdict == VerdictKind::Revise) {
            record.status = Status::Revised;
            record.composed_text = revise.revised_text.clone().unwrap_or_default().trim().to_string();
        } else {
            record.status = Status::Accepted;
        }
    }
    Ok(())
}

/// Benchmark records for everything not rejected.
pub fn final_benchmark(records: &[ComposedQuestion]) -> Vec<BenchmarkRecord> {
    records
        .iter()
        .filter(|r| r.status != Status::Rejected)
        .map(ComposedQuestion::to_benchmark_record)
        .collect()
}
