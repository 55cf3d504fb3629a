//! Evidence fusion and ranking across retrieval sources.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::providers::{ProviderError, RelevanceScorer};
use crate::text_index::content_tokens;

/// Default context size per hop.
pub const DEFAULT_TOP_K: usize = 3;

/// Where a piece of evidence came from. Declaration order is the tie-break
/// order when relevance scores are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSource {
    Sparql,
    SparseKb,
    DenseText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceCandidate {
    pub key: String,
    pub text: String,
    pub source: EvidenceSource,
    pub originating_query: String,
    /// Executed query for sparql-sourced evidence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    /// Index of the tool invocation in the trace that produced this item.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invocation: Option<usize>,
    pub relevance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedContext {
    pub question: String,
    pub scorer: String,
    pub items: Vec<EvidenceCandidate>,
}

impl RankedContext {
    pub fn empty(question: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            scorer: String::new(),
            items: Vec::new(),
        }
    }
}

/// Share of the query's content tokens that occur in the candidate.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl LexicalScorer {
    pub fn overlap(query: &str, candidate: &str) -> f64 {
        let q = content_tokens(query);
        if q.is_empty() {
            return 0.0;
        }
        let c = content_tokens(candidate);
        q.intersection(&c).count() as f64 / q.len() as f64
    }
}

impl RelevanceScorer for LexicalScorer {
    fn name(&self) -> &str {
        "lexical"
    }

    fn score(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, ProviderError> {
        Ok(candidates.iter().map(|c| Self::overlap(query, c)).collect())
    }
}

fn relevance_order(a: &EvidenceCandidate, b: &EvidenceCandidate) -> Ordering {
    let ra = a.relevance.filter(|r| !r.is_nan()).unwrap_or(f64::NEG_INFINITY);
    let rb = b.relevance.filter(|r| !r.is_nan()).unwrap_or(f64::NEG_INFINITY);
    rb.partial_cmp(&ra)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.source.cmp(&b.source))
        .then_with(|| a.key.cmp(&b.key))
}

/// Deduplicates the pool by key (keeping the most relevant copy), rescores
/// every survivor against `question`, and keeps the top `k`.
pub fn fuse_and_rank(
    question: &str,
    pool: Vec<EvidenceCandidate>,
    k: usize,
    scorer: &dyn RelevanceScorer,
) -> RankedContext {
    let k = k.max(1);
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut unique: Vec<EvidenceCandidate> = Vec::new();
    for cand in pool {
        match slot.get(&cand.key) {
            Some(&i) => {
                let keep_new = match (unique[i].relevance, cand.relevance) {
                    (Some(old), Some(new)) => new > old,
                    (None, Some(_)) => true,
                    _ => false,
                };
                if keep_new {
                    unique[i] = cand;
                }
            }
            None => {
                slot.insert(cand.key.clone(), unique.len());
                unique.push(cand);
            }
        }
    }
    let texts: Vec<String> = unique.iter().map(|c| c.text.clone()).collect();
    let (scores, scorer_name) = match scorer.score(question, &texts) {
        Ok(s) if s.len() == texts.len() => (s, scorer.name().to_string()),
        Ok(s) => {
            tracing::warn!(expected = texts.len(), got = s.len(), "scorer cardinality mismatch, using lexical overlap");
            (lexical(question, &texts), "lexical".to_string())
        }
        Err(e) => {
            tracing::warn!(error = %e, "relevance scorer unavailable, using lexical overlap");
            (lexical(question, &texts), "lexical".to_string())
        }
    };
    for (c, s) in unique.iter_mut().zip(scores) {
        c.relevance = Some(s);
    }
    unique.sort_by(relevance_order);
    unique.truncate(k);
    RankedContext {
        question: question.to_string(),
        scorer: scorer_name,
        items: unique,
    }
}

fn lexical(question: &str, texts: &[String]) -> Vec<f64> {
    texts.iter().map(|t| LexicalScorer::overlap(question, t)).collect()
}
