//! Construction of two-hop heterogeneous questions from text anchors and
//! knowledge-base triples, with leak validation and an annotation round trip.

mod anchors;
mod annotation;
mod generation;
mod linking;
mod pipeline;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anchors::{filter_anchors, AnchorQA, MAX_ANSWER_WORDS};
pub use annotation::{
    export_tasks, final_benchmark, import_verdicts, AnnotationTask, Verdict, VerdictKind,
};
pub use generation::{
    compose, contains_phrase, gen_kb_question, make_aggregate, make_yesno, AggregateQuestion, YesNoQuestion,
    MAX_REGENERATIONS, VERIFICATION_OPENERS,
};
pub use linking::{link_bridge, retain_triples, CandidatePair, Direction};
pub use pipeline::{generate, ComposedQuestion, DatagenOutput, GenerationConfig, HopQA, Rejection, Status};

use crate::kb::KbError;
use crate::llm::LlmError;

/// Why a composed question was discarded, by a validator or an annotator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Circular,
    BridgeLeak,
    AnswerLeak,
    MeaningChange,
    Other,
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("generated question still leaks {leaked:?} after {attempts} attempts")]
    GenerationLeak { leaked: String, attempts: usize },
    #[error("every sampled distractor matched the answer {answer:?}")]
    DistractorEqualsAnswer { answer: String },
    #[error("no well-formed verification question after {attempts} attempts")]
    VerificationFormat { attempts: usize },
    #[error("aggregate question needs a text-to-kb pair with at least 2 objects, found {count}")]
    AggregatePrecondition { count: usize },
    #[error("composition rejected ({reason:?}) after {attempts} attempts")]
    CompositionLeak { reason: RejectReason, attempts: usize },
    #[error("hop questions are identical")]
    CircularQuestion,
    #[error("hop-2 question does not mention the bridge {bridge:?}")]
    BridgeNotMentioned { bridge: String },
    #[error("unknown record id {0:?}")]
    UnknownRecordId(String),
    #[error("record {id}: verdict for annotator slot {slot} is invalid: {reason}")]
    InvalidVerdict { id: String, slot: usize, reason: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Load(#[from] KbError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl DatagenError {
    /// Rejection reason code for validator failures, if any.
    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            DatagenError::CompositionLeak { reason, .. } => Some(*reason),
            DatagenError::CircularQuestion => Some(RejectReason::Circular),
            DatagenError::GenerationLeak { .. } => Some(RejectReason::AnswerLeak),
            _ => None,
        }
    }
}
