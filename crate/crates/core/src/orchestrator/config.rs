use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::text_index::RetrieverKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Detllm,
    Vanilla,
    ClosedBook,
    Oracle,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "detllm" => Ok(Self::Detllm),
            "vanilla" => Ok(Self::Vanilla),
            "closed_book" | "closed-book" => Ok(Self::ClosedBook),
            "oracle" => Ok(Self::Oracle),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Which searchable collection a retriever runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    /// Wikipedia-style passages.
    Text,
    /// Linearized KB triples.
    Kb,
    /// Both collections in one index.
    Unified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Routing {
    /// Search one merged index with `unified_retriever` instead of one index
    /// per source.
    pub unified: bool,
    pub unified_retriever: RetrieverKind,
    pub text_retriever: Option<RetrieverKind>,
    pub kb_retriever: Option<RetrieverKind>,
    pub sparql: bool,
}

impl Default for Routing {
    fn default() -> Self {
        Self {
            unified: false,
            unified_retriever: RetrieverKind::Dense,
            text_retriever: Some(RetrieverKind::Dense),
            kb_retriever: Some(RetrieverKind::Sparse),
            sparql: true,
        }
    }
}

impl Routing {
    /// Retriever runs per search query, in execution order.
    pub fn routes(&self) -> Vec<(CorpusKind, RetrieverKind)> {
        if self.unified {
            return vec![(CorpusKind::Unified, self.unified_retriever)];
        }
        let mut out = Vec::new();
        if let Some(r) = self.text_retriever {
            out.push((CorpusKind::Text, r));
        }
        if let Some(r) = self.kb_retriever {
            out.push((CorpusKind::Kb, r));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub n_hops: usize,
    /// Diverse queries sampled per hop.
    pub diverse_queries: usize,
    /// Context items kept per hop.
    pub context_size: usize,
    /// Hits requested from each retriever per query before fusion.
    pub retrieve_depth: usize,
    pub query_temperature: f64,
    pub answer_temperature: f64,
    pub max_tokens: u32,
    /// Rank link candidates by description similarity (else lexically).
    pub describe_links: bool,
    pub seed: Option<u64>,
    pub routing: Routing,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Detllm,
            n_hops: 2,
            diverse_queries: 3,
            context_size: 3,
            retrieve_depth: 10,
            query_temperature: 0.7,
            answer_temperature: 0.0,
            max_tokens: 256,
            describe_links: true,
            seed: None,
            routing: Routing::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::Config(m.to_string()));
        if self.n_hops == 0 {
            return bad("n_hops must be at least 1");
        }
        if self.diverse_queries == 0 {
            return bad("diverse_queries must be at least 1");
        }
        if self.context_size == 0 {
            return bad("context_size must be at least 1");
        }
        if self.retrieve_depth == 0 {
            return bad("retrieve_depth must be at least 1");
        }
        for t in [self.query_temperature, self.answer_temperature] {
            if !t.is_finite() || t < 0.0 {
                return bad("temperatures must be finite and non-negative");
            }
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, OrchestratorError> {
        let cfg: Self = toml::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Indexes the configured routes need.
    pub fn index_plan(&self) -> BTreeSet<(CorpusKind, RetrieverKind)> {
        match self.mode {
            Mode::ClosedBook | Mode::Oracle => BTreeSet::new(),
            Mode::Detllm | Mode::Vanilla => self.routing.routes().into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.n_hops, c.diverse_queries, c.context_size), (2, 3, 3));
        assert_eq!(c.query_temperature, 0.7);
        assert_eq!(c.answer_temperature, 0.0);
        assert_eq!(
            c.routing.routes(),
            vec![(CorpusKind::Text, RetrieverKind::Dense), (CorpusKind::Kb, RetrieverKind::Sparse)]
        );
    }

    #[test]
    fn toml_overrides_and_rejects() {
        let c = RunConfig::from_toml(
            "mode = \"vanilla\"\ncontext_size = 5\n[routing]\nunified = true\nunified_retriever = \"sparse\"\nsparql = false\n",
        )
        .unwrap();
        assert_eq!(c.mode, Mode::Vanilla);
        assert_eq!(c.context_size, 5);
        assert_eq!(c.routing.routes(), vec![(CorpusKind::Unified, RetrieverKind::Sparse)]);
        assert!(RunConfig::from_toml("n_hops = 0").is_err());
        assert!(RunConfig::from_toml("diverse_queries = 0").is_err());
        assert!(RunConfig::from_toml("contxt_size = 3").is_err());
    }

    #[test]
    fn closed_book_needs_no_index() {
        let c = RunConfig {
            mode: Mode::ClosedBook,
            ..RunConfig::default()
        };
        assert!(c.index_plan().is_empty());
    }
}
