use serde::{Deserialize, Serialize};

use super::config::{CorpusKind, Mode};
use crate::linker::LinkResult;
use crate::rerank::RankedContext;
use crate::text_index::RetrieverKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tool {
    Retriever { corpus: CorpusKind, retriever: RetrieverKind },
    Sparql,
    /// Gold evidence injected in oracle mode.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub index: usize,
    /// 1-based hop; single-step modes retrieve in hop 1.
    pub hop: usize,
    pub tool: Tool,
    pub query: String,
    pub hit_keys: Vec<String>,
    pub scores: Vec<f64>,
    /// Answer strings for sparql invocations (projected labels or the count).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkAttempt {
    pub mention: String,
    pub context_query: String,
    pub generated_sparql: String,
    pub result: LinkResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repaired_sparql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One decomposition step. A hop whose completion could not be used keeps
/// empty queries and context and records why in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopState {
    pub hop: usize,
    pub rationale: Option<String>,
    pub search_queries: Vec<String>,
    pub query_entity: Option<String>,
    pub sparql_text: Option<String>,
    pub context: RankedContext,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkAttempt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: String,
    pub mode: Mode,
    pub hops: Vec<HopState>,
    pub llm_call_count: usize,
    pub invocations: Vec<ToolInvocation>,
    pub final_rationale: Option<String>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl PipelineTrace {
    pub fn new(question: &str, mode: Mode) -> Self {
        Self {
            id: None,
            question: question.to_string(),
            mode,
            hops: Vec::new(),
            llm_call_count: 0,
            invocations: Vec::new(),
            final_rationale: None,
            answer: String::new(),
            errors: Vec::new(),
        }
    }

    /// Every context item names an invocation that lists its key.
    pub fn is_closed(&self) -> bool {
        self.hops.iter().flat_map(|h| &h.context.items).all(|item| {
            item.invocation
                .and_then(|i| self.invocations.get(i).filter(|inv| inv.index == i))
                .is_some_and(|inv| inv.hit_keys.contains(&item.key))
        })
    }

    pub fn link_attempts(&self) -> impl Iterator<Item = &LinkAttempt> {
        self.hops.iter().flat_map(|h| &h.links)
    }
}
