//! The multi-hop control loop.
//!
//! In `detllm` mode a question takes `n_hops + 1` LLM calls. Each hop prompt
//! is sampled `diverse_queries` times; every distinct search query is sent to
//! the routed retrievers, every generated SPARQL query is linked, repaired and
//! executed, and the pooled evidence is reranked down to `context_size` items.
//! Contexts accumulate across hops and feed the final answer call.

mod config;
mod parse;
mod prompts;
mod sources;
mod trace;

use std::collections::BTreeSet;

use thiserror::Error;

pub use config::{CorpusKind, Mode, Routing, RunConfig};
pub use parse::{parse_final, parse_llm_fields, FinalFields, HopFields};
pub use prompts::{render_context, render_final, render_hop};
pub use sources::{passage_evidence, KnowledgeSources};
pub use trace::{HopState, LinkAttempt, PipelineTrace, Tool, ToolInvocation};

use crate::linker::{EntityLinker, LinkResult};
use crate::llm::{generate, GenerationRequest, TextGenerator};
use crate::providers::{EmbeddingProvider, RelevanceScorer};
use crate::rerank::{fuse_and_rank, EvidenceCandidate, EvidenceSource, RankedContext};
use crate::sparql::{answer_labels, evaluate, parse as parse_sparql, render_evidence};
use crate::text_index::{IndexError, RetrieverKind, ScoredHit};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("completion has no {0} field")]
    MissingField(&'static str),
    #[error("no {retriever:?} index over the {corpus:?} corpus")]
    MissingIndex {
        corpus: CorpusKind,
        retriever: RetrieverKind,
    },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("oracle mode needs gold evidence")]
    OracleWithoutGold,
}

pub struct Pipeline<'a> {
    config: RunConfig,
    sources: &'a KnowledgeSources,
    llm: &'a dyn TextGenerator,
    embedder: &'a dyn EmbeddingProvider,
    scorer: &'a dyn RelevanceScorer,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        config: RunConfig,
        sources: &'a KnowledgeSources,
        llm: &'a dyn TextGenerator,
        embedder: &'a dyn EmbeddingProvider,
        scorer: &'a dyn RelevanceScorer,
    ) -> Result<Self, OrchestratorError> {
        config.validate()?;
        if let Some(&(corpus, retriever)) = config
            .index_plan()
            .iter()
            .find(|(c, r)| !sources.has_index(*c, *r))
        {
            return Err(OrchestratorError::MissingIndex { corpus, retriever });
        }
        Ok(Self {
            config,
            sources,
            llm,
            embedder,
            scorer,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn sources(&self) -> &'a KnowledgeSources {
        self.sources
    }

    pub fn answer(&self, question: &str) -> Result<PipelineTrace, OrchestratorError> {
        Ok(match self.config.mode {
            Mode::Detllm => self.run_detllm(question),
            Mode::Vanilla => self.run_vanilla(question),
            Mode::ClosedBook => {
                let mut trace = PipelineTrace::new(question, Mode::ClosedBook);
                self.finish(question, &[], &mut trace);
                trace
            }
            Mode::Oracle => return Err(OrchestratorError::OracleWithoutGold),
        })
    }

    /// Answers from the given evidence alone, one context per hop.
    pub fn answer_with_gold(&self, question: &str, gold: Vec<RankedContext>) -> PipelineTrace {
        let mut trace = PipelineTrace::new(question, Mode::Oracle);
        for (i, mut context) in gold.into_iter().enumerate() {
            let index = trace.invocations.len();
            for item in &mut context.items {
                item.invocation = Some(index);
            }
            trace.invocations.push(ToolInvocation {
                index,
                hop: i + 1,
                tool: Tool::Oracle,
                query: question.to_string(),
                hit_keys: context.items.iter().map(|c| c.key.clone()).collect(),
                scores: Vec::new(),
                answers: Vec::new(),
                error: None,
            });
            trace.hops.push(HopState {
                hop: i + 1,
                rationale: None,
                search_queries: Vec::new(),
                query_entity: None,
                sparql_text: None,
                context,
                links: Vec::new(),
                error: None,
            });
        }
        let contexts: Vec<RankedContext> = trace.hops.iter().map(|h| h.context.clone()).collect();
        self.finish(question, &contexts, &mut trace);
        trace
    }

    fn run_detllm(&self, question: &str) -> PipelineTrace {
        let mut trace = PipelineTrace::new(question, Mode::Detllm);
        let mut contexts: Vec<RankedContext> = Vec::new();
        for hop in 1..=self.config.n_hops {
            let state = self.run_hop(hop, question, &contexts, &mut trace);
            contexts.push(state.context.clone());
            trace.hops.push(state);
        }
        self.finish(question, &contexts, &mut trace);
        trace
    }

    fn run_vanilla(&self, question: &str) -> PipelineTrace {
        let mut trace = PipelineTrace::new(question, Mode::Vanilla);
        let queries = vec![question.to_string()];
        let pool = self.retrieve(1, &queries, &mut trace);
        let context = self.rank(question, pool);
        trace.hops.push(HopState {
            hop: 1,
            rationale: None,
            search_queries: queries,
            query_entity: None,
            sparql_text: None,
            context: context.clone(),
            links: Vec::new(),
            error: None,
        });
        self.finish(question, &[context], &mut trace);
        trace
    }

    fn rank(&self, question: &str, pool: Vec<EvidenceCandidate>) -> RankedContext {
        if pool.is_empty() {
            RankedContext::empty(question)
        } else {
            fuse_and_rank(question, pool, self.config.context_size, self.scorer)
        }
    }

    fn run_hop(
        &self,
        hop: usize,
        question: &str,
        contexts: &[RankedContext],
        trace: &mut PipelineTrace,
    ) -> HopState {
        let mut state = HopState {
            hop,
            rationale: None,
            search_queries: Vec::new(),
            query_entity: None,
            sparql_text: None,
            context: RankedContext::empty(question),
            links: Vec::new(),
            error: None,
        };
        let request = GenerationRequest::new(
            render_hop(hop, question, contexts),
            self.config.query_temperature,
            self.config.diverse_queries,
        )
        .with_max_tokens(self.config.max_tokens)
        .with_seed(self.config.seed);
        trace.llm_call_count += 1;
        let samples = match generate(&request, self.llm) {
            Ok(r) => r.samples,
            Err(e) => {
                tracing::warn!(hop, error = %e, "hop generation failed");
                trace.errors.push(format!("hop {hop}: {e}"));
                state.error = Some(e.to_string());
                return state;
            }
        };
        let parsed: Vec<HopFields> = samples
            .iter()
            .filter_map(|s| match parse_llm_fields(s) {
                Ok(f) => Some(f),
                Err(e) => {
                    tracing::debug!(hop, error = %e, "unusable sample");
                    None
                }
            })
            .collect();
        if parsed.is_empty() {
            let e = OrchestratorError::MissingField("search_query");
            trace.errors.push(format!("hop {hop}: {e}"));
            state.error = Some(e.to_string());
            return state;
        }
        state.rationale = parsed[0].rationale.clone();
        state.query_entity = parsed.iter().find_map(|f| f.query_entity.clone());
        state.sparql_text = parsed.iter().find_map(|f| f.sparql.clone());
        for f in &parsed {
            if !state.search_queries.contains(&f.search_query) {
                state.search_queries.push(f.search_query.clone());
            }
        }
        let mut pool = self.retrieve(hop, &state.search_queries, trace);
        if self.config.routing.sparql {
            pool.extend(self.symbolic(hop, &parsed, &mut state.links, trace));
        }
        state.context = self.rank(&state.search_queries[0], pool);
        state
    }

    /// Runs every query against every routed retriever, concurrently, and
    /// records the invocations in job order.
    fn retrieve(&self, hop: usize, queries: &[String], trace: &mut PipelineTrace) -> Vec<EvidenceCandidate> {
        let jobs: Vec<(&str, CorpusKind, RetrieverKind)> = queries
            .iter()
            .flat_map(|q| self.config.routing.routes().into_iter().map(move |(c, r)| (q.as_str(), c, r)))
            .collect();
        let depth = self.config.retrieve_depth;
        let results: Vec<Result<Vec<ScoredHit>, OrchestratorError>> = std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|&(q, c, r)| s.spawn(move || self.sources.search(c, r, q, depth, self.embedder)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("retrieval worker panicked"))
                .collect()
        });
        let mut pool = Vec::new();
        for ((query, corpus, retriever), result) in jobs.into_iter().zip(results) {
            let index = trace.invocations.len();
            let mut invocation = ToolInvocation {
                index,
                hop,
                tool: Tool::Retriever { corpus, retriever },
                query: query.to_string(),
                hit_keys: Vec::new(),
                scores: Vec::new(),
                answers: Vec::new(),
                error: None,
            };
            match result {
                Ok(hits) => {
                    for hit in hits {
                        let Some(passage) = self.sources.passage(&hit.passage_id) else {
                            continue;
                        };
                        let (text, source) = passage_evidence(passage);
                        invocation.hit_keys.push(hit.passage_id.clone());
                        invocation.scores.push(hit.score);
                        pool.push(EvidenceCandidate {
                            key: hit.passage_id,
                            text,
                            source,
                            originating_query: query.to_string(),
                            provenance: None,
                            invocation: Some(index),
                            relevance: Some(hit.score),
                        });
                    }
                }
                Err(e) => {
                    tracing::warn!(hop, error = %e, "retrieval failed");
                    trace.errors.push(format!("hop {hop}: {e}"));
                    invocation.error = Some(e.to_string());
                }
            }
            trace.invocations.push(invocation);
        }
        pool
    }

    /// Links, repairs, and executes each distinct generated SPARQL query.
    fn symbolic(
        &self,
        hop: usize,
        parsed: &[HopFields],
        links: &mut Vec<LinkAttempt>,
        trace: &mut PipelineTrace,
    ) -> Vec<EvidenceCandidate> {
        let store = self.sources.store();
        let linker = EntityLinker::new(store);
        let provider = self.config.describe_links.then_some(self.embedder);
        let mut executed = BTreeSet::new();
        let mut pool = Vec::new();
        for fields in parsed {
            let Some(text) = &fields.sparql else {
                continue;
            };
            let mut attempt = LinkAttempt {
                mention: fields.query_entity.clone().unwrap_or_default(),
                context_query: fields.search_query.clone(),
                generated_sparql: text.clone(),
                result: LinkResult::none(),
                repaired_sparql: None,
                error: None,
            };
            let query = match parse_sparql(text) {
                Ok(q) => q,
                Err(e) => {
                    attempt.error = Some(e.to_string());
                    links.push(attempt);
                    continue;
                }
            };
            if attempt.mention.is_empty() {
                attempt.error = Some("no query entity".into());
                links.push(attempt);
                continue;
            }
            attempt.result = linker.link(&attempt.mention, &fields.search_query, provider);
            let repaired = match linker.repair_sparql(&query, &attempt.result, &fields.search_query) {
                Ok(q) => q,
                Err(e) => {
                    attempt.error = Some(e.to_string());
                    links.push(attempt);
                    continue;
                }
            };
            let canonical = repaired.to_string();
            attempt.repaired_sparql = Some(canonical.clone());
            links.push(attempt);
            if !executed.insert(canonical.clone()) {
                continue;
            }
            let result = evaluate(&repaired, store);
            let index = trace.invocations.len();
            let key = format!("sparql:{canonical}");
            let mut invocation = ToolInvocation {
                index,
                hop,
                tool: Tool::Sparql,
                query: canonical.clone(),
                hit_keys: Vec::new(),
                scores: Vec::new(),
                answers: answer_labels(&result, &repaired, store),
                error: None,
            };
            if !result.is_empty() {
                invocation.hit_keys.push(key.clone());
                pool.push(EvidenceCandidate {
                    key,
                    text: render_evidence(&result, &repaired, store).join("; "),
                    source: EvidenceSource::Sparql,
                    originating_query: fields.search_query.clone(),
                    provenance: Some(canonical),
                    invocation: Some(index),
                    relevance: None,
                });
            }
            trace.invocations.push(invocation);
        }
        pool
    }

    fn finish(&self, question: &str, contexts: &[RankedContext], trace: &mut PipelineTrace) {
        let request = GenerationRequest::new(render_final(question, contexts), self.config.answer_temperature, 1)
            .with_max_tokens(self.config.max_tokens)
            .with_seed(self.config.seed);
        trace.llm_call_count += 1;
        let completion = match generate(&request, self.llm) {
            Ok(mut r) => r.samples.swap_remove(0),
            Err(e) => {
                tracing::warn!(error = %e, "final answer generation failed");
                trace.errors.push(format!("final: {e}"));
                return;
            }
        };
        match parse_final(&completion) {
            Ok(f) => {
                trace.final_rationale = f.rationale;
                trace.answer = f.answer;
            }
            Err(e) => {
                trace.errors.push(format!("final: {e}"));
                trace.answer = completion
                    .lines()
                    .rev()
                    .map(str::trim)
                    .find(|l| !l.is_empty())
                    .unwrap_or_default()
                    .to_string();
            }
        }
    }
}
