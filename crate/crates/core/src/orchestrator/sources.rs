use std::collections::{BTreeMap, BTreeSet};

use super::config::CorpusKind;
use super::OrchestratorError;
use crate::kb::TripleStore;
use crate::providers::EmbeddingProvider;
use crate::rerank::EvidenceSource;
use crate::text_index::{
    linearize_store, DenseIndex, IndexError, Passage, PassageOrigin, RetrieverKind, ScoredHit, SparseIndex,
};

/// The KB plus every searchable index a run needs.
#[derive(Debug)]
pub struct KnowledgeSources {
    store: TripleStore,
    passages: BTreeMap<String, Passage>,
    sparse: BTreeMap<CorpusKind, SparseIndex>,
    dense: BTreeMap<CorpusKind, DenseIndex>,
}

const EMBED_BATCH: usize = 64;
const EMBED_IN_FLIGHT: usize = 4;

impl KnowledgeSources {
    /// Builds the indexes in `plan`. Text passages keep their ids; KB triples
    /// are linearized under `kb:` ids.
    pub fn build(
        store: TripleStore,
        text: Vec<Passage>,
        plan: &BTreeSet<(CorpusKind, RetrieverKind)>,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Self, IndexError> {
        let kb = linearize_store(&store);
        let mut passages = BTreeMap::new();
        for p in text.iter().chain(&kb) {
            if passages.insert(p.id.clone(), p.clone()).is_some() {
                return Err(IndexError::DuplicateId(p.id.clone()));
            }
        }
        let unified: Vec<Passage> = text.iter().chain(&kb).cloned().collect();
        let corpus = |c: CorpusKind| -> &[Passage] {
            match c {
                CorpusKind::Text => &text,
                CorpusKind::Kb => &kb,
                CorpusKind::Unified => &unified,
            }
        };
        let mut sparse = BTreeMap::new();
        let mut dense = BTreeMap::new();
        for &(c, r) in plan {
            match r {
                RetrieverKind::Sparse => {
                    sparse.insert(c, SparseIndex::build(corpus(c))?);
                }
                RetrieverKind::Dense => {
                    dense.insert(c, DenseIndex::embed_corpus(corpus(c), embedder, EMBED_BATCH, EMBED_IN_FLIGHT)?);
                }
            }
        }
        tracing::info!(passages = passages.len(), sparse = sparse.len(), dense = dense.len(), "knowledge sources ready");
        Ok(Self {
            store,
            passages,
            sparse,
            dense,
        })
    }

    pub fn store(&self) -> &TripleStore {
        &self.store
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passages.get(id)
    }

    pub fn has_index(&self, corpus: CorpusKind, retriever: RetrieverKind) -> bool {
        match retriever {
            RetrieverKind::Sparse => self.sparse.contains_key(&corpus),
            RetrieverKind::Dense => self.dense.contains_key(&corpus),
        }
    }

    pub fn search(
        &self,
        corpus: CorpusKind,
        retriever: RetrieverKind,
        query: &str,
        k: usize,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Vec<ScoredHit>, OrchestratorError> {
        let missing = || OrchestratorError::MissingIndex { corpus, retriever };
        match retriever {
            RetrieverKind::Sparse => Ok(self.sparse.get(&corpus).ok_or_else(missing)?.search(query, k)),
            RetrieverKind::Dense => Ok(self.dense.get(&corpus).ok_or_else(missing)?.search(query, k, embedder)?),
        }
    }
}

/// Evidence text and source tag for a passage.
pub fn passage_evidence(p: &Passage) -> (String, EvidenceSource) {
    match p.origin {
        PassageOrigin::WikiText => (p.embedding_text(), EvidenceSource::DenseText),
        PassageOrigin::LinearizedTriple => (p.body.clone(), EvidenceSource::SparseKb),
    }
}
