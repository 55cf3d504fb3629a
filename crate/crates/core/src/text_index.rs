//! Passage retrieval: a BM25 inverted index, an exact-scan dense index, and
//! triple linearization so KB facts can be searched as text.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KbError, ObjectValue, Triple, TripleStore};
use crate::providers::{EmbeddingProvider, ProviderError};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate passage id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Load(#[from] KbError),
}

/// Case-folds and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "by", "with", "from", "is", "was", "were",
    "are", "be", "been", "does", "do", "did", "who", "whom", "what", "which", "where", "when", "how",
    "many", "much", "and", "or", "this", "that", "it", "its", "has", "have", "had", "he", "she",
];

/// Distinct tokens of `text` minus common function words.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !FUNCTION_WORDS.contains(&t.as_str()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassageOrigin {
    WikiText,
    LinearizedTriple,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "text")]
    pub body: String,
    #[serde(default = "wiki_origin")]
    pub origin: PassageOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_triple: Option<Triple>,
}

fn wiki_origin() -> PassageOrigin {
    PassageOrigin::WikiText
}

impl Passage {
    pub fn text(id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            body: body.into(),
            origin: PassageOrigin::WikiText,
            source_triple: None,
        }
    }

    /// Text handed to embedding models: the title is prepended unless the
    /// body already starts with it.
    pub fn embedding_text(&self) -> String {
        if self.title.is_empty() || self.body.starts_with(&self.title) {
            self.body.clone()
        } else {
            format!("{}. {}", self.title, self.body)
        }
    }
}

/// Loads a `{id, title, text}` line-delimited corpus.
pub fn load_passages(path: &Path) -> Result<Vec<Passage>, IndexError> {
    Ok(crate::kb::read_records(path)?)
}

/// Deterministic passage id for a triple.
pub fn triple_passage_id(triple: &Triple) -> String {
    match &triple.object {
        ObjectValue::Entity(o) => format!("kb:{}|{}|{}", triple.subject, triple.predicate, o),
        ObjectValue::Literal(s) => format!("kb:{}|{}|{:?}", triple.subject, triple.predicate, s),
    }
}

/// Renders a triple as the flat string `sub relation obj`.
pub fn linearize(triple: &Triple, store: &TripleStore) -> Passage {
    let subject = store.entity_label(triple.subject);
    let body = format!(
        "{} {} {}",
        subject,
        store.relation_label(triple.predicate),
        store.object_label(&triple.object)
    );
    Passage {
        id: triple_passage_id(triple),
        title: subject,
        body,
        origin: PassageOrigin::LinearizedTriple,
        source_triple: Some(triple.clone()),
    }
}

/// Linearizes every distinct triple of the store.
pub fn linearize_store(store: &TripleStore) -> Vec<Passage> {
    let distinct: BTreeSet<&Triple> = store.triples().iter().collect();
    distinct.into_iter().map(|t| linearize(t, store)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverKind {
    Sparse,
    Dense,
}

impl std::str::FromStr for RetrieverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sparse" | "bm25" => Ok(Self::Sparse),
            "dense" => Ok(Self::Dense),
            other => Err(format!("unknown retriever {other:?} (expected sparse or dense)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub passage_id: String,
    pub score: f64,
    pub retriever: RetrieverKind,
}

/// Sorts by score descending, ties by passage id ascending, and keeps `k`.
fn rank(mut hits: Vec<ScoredHit>, k: usize) -> Vec<ScoredHit> {
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.passage_id.cmp(&b.passage_id))
    });
    hits.truncate(k);
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// Okapi BM25 over an inverted index.
///
/// `idf = max(0, ln((N - df + 0.5) / (df + 0.5)))`. Query terms are treated as
/// a set, and documents whose score is not strictly positive are never
/// returned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseIndex {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl SparseIndex {
    pub fn build(corpus: &[Passage]) -> Result<Self, IndexError> {
        Self::build_with(corpus, Bm25Params::default())
    }

    pub fn build_with(corpus: &[Passage], params: Bm25Params) -> Result<Self, IndexError> {
        let mut seen = BTreeSet::new();
        let mut doc_ids = Vec::with_capacity(corpus.len());
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (doc, passage) in corpus.iter().enumerate() {
            if !seen.insert(passage.id.as_str()) {
                return Err(IndexError::DuplicateId(passage.id.clone()));
            }
            let tokens = tokenize(&passage.body);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, n) in tf {
                postings.entry(term).or_default().push((doc as u32, n));
            }
            doc_ids.push(passage.id.clone());
            doc_lengths.push(tokens.len() as u32);
        }
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_lengths.len() as f64
        };
        Ok(Self {
            params,
            doc_ids,
            doc_lengths,
            avg_doc_length,
            postings,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    /// Postings for a (case-folded) term as `(passage id, term frequency)`.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|list| {
                list.iter()
                    .map(|&(d, tf)| (self.doc_ids[d as usize].as_str(), tf))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
    }

    pub fn search(&self, query: &str, k: usize) -> Vec<ScoredHit> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let Bm25Params { k1, b } = self.params;
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let len = f64::from(self.doc_lengths[doc as usize]);
                let norm = k1 * (1.0 - b + b * len / self.avg_doc_length);
                *scores.entry(doc).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let hits = scores
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(doc, score)| ScoredHit {
                passage_id: self.doc_ids[doc as usize].clone(),
                score,
                retriever: RetrieverKind::Sparse,
            })
            .collect();
        rank(hits, k)
    }
}

/// Exact-scan cosine index over unit-normalized vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
    provider: String,
}

fn normalize_vector(v: &mut [f32]) -> Result<(), ProviderError> {
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(ProviderError::BadResponse("zero or non-finite vector".into()));
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    Ok(())
}

impl DenseIndex {
    /// Embeds every passage, `batch` texts per provider call with at most
    /// `in_flight` calls running at once.
    pub fn embed_corpus(
        corpus: &[Passage],
        provider: &dyn EmbeddingProvider,
        batch: usize,
        in_flight: usize,
    ) -> Result<Self, IndexError> {
        let mut seen = BTreeSet::new();
        for p in corpus {
            if !seen.insert(p.id.as_str()) {
                return Err(IndexError::DuplicateId(p.id.clone()));
            }
        }
        let texts: Vec<String> = corpus.iter().map(Passage::embedding_text).collect();
        let chunks: Vec<&[String]> = texts.chunks(batch.max(1)).collect();
        let mut vectors: Vec<Vec<f32>> = Vec::with_capacity(texts.len());
        for wave in chunks.chunks(in_flight.max(1)) {
            let results: Vec<Result<Vec<Vec<f32>>, ProviderError>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|chunk| s.spawn(move || provider.embed(chunk)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding worker panicked"))
                    .collect()
            });
            for (chunk, result) in wave.iter().zip(results) {
                let got = result?;
                if got.len() != chunk.len() {
                    return Err(ProviderError::CardinalityMismatch {
                        expected: chunk.len(),
                        got: got.len(),
                    }
                    .into());
                }
                vectors.extend(got);
            }
        }
        let dim = vectors.first().map_or(0, Vec::len);
        for v in &mut vectors {
            if v.len() != dim {
                return Err(ProviderError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                }
                .into());
            }
            normalize_vector(v)?;
        }
        Ok(Self {
            dim,
            ids: corpus.iter().map(|p| p.id.clone()).collect(),
            vectors,
            provider: provider.name().to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        self.ids
            .iter()
            .position(|x| x == id)
            .map(|i| self.vectors[i].as_slice())
    }

    pub fn search(
        &self,
        query: &str,
        k: usize,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Vec<ScoredHit>, IndexError> {
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let mut q = provider
            .embed(&[query.to_string()])?
            .pop()
            .ok_or(ProviderError::CardinalityMismatch {
                expected: 1,
                got: 0,
            })?;
        if q.len() != self.dim {
            return Err(ProviderError::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            }
            .into());
        }
        normalize_vector(&mut q)?;
        Ok(self.search_vector(&q, k))
    }

    /// Scores a unit query vector against every stored vector.
    pub fn search_vector(&self, query: &[f32], k: usize) -> Vec<ScoredHit> {
        let hits = self
            .ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| ScoredHit {
                passage_id: id.clone(),
                score: crate::providers::cosine(query, v),
                retriever: RetrieverKind::Dense,
            })
            .collect();
        rank(hits, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{Entity, EntityId, Relation, RelationId};
    use crate::providers::HashingEmbedder;

    fn corpus() -> Vec<Passage> {
        vec![
            Passage::text("d1", "", "emily blunt sibling felicity blunt"),
            Passage::text("d2", "", "emily blunt spouse john krasinski"),
            Passage::text("d3", "", "milton friedman award received nobel"),
        ]
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("Where was David-Resnick born? (1970)"),
            vec!["where", "was", "david", "resnick", "born", "1970"]
        );
        assert!(tokenize("  ... ").is_empty());
        let c = content_tokens("How many organizations is the president a member of?");
        assert_eq!(c.into_iter().collect::<Vec<_>>(), ["member", "organizations", "president"]);
    }

    #[test]
    fn linearize_shapes_body_and_id() {
        let store = TripleStore::builder()
            .entity(Entity::new(EntityId::new(1), "Emily Blunt"))
            .entity(Entity::new(EntityId::new(2), "Felicity Blunt"))
            .relation(Relation::new(RelationId::new(3373), "sibling"))
            .relation(Relation::new(RelationId::new(1), "number of children"))
            .build()
            .unwrap();
        let t = Triple::new(EntityId::new(1), RelationId::new(3373), ObjectValue::Entity(EntityId::new(2)));
        let p = linearize(&t, &store);
        assert_eq!(p.body, "Emily Blunt sibling Felicity Blunt");
        assert_eq!(p.origin, PassageOrigin::LinearizedTriple);
        assert_eq!(p.source_triple.as_ref(), Some(&t));
        assert_eq!(linearize(&t, &store).id, p.id);

        let lit = Triple::new(EntityId::new(1), RelationId::new(1), ObjectValue::Literal("3".into()));
        let p = linearize(&lit, &store);
        assert_eq!(p.body, "Emily Blunt number of children 3");
        assert_ne!(p.id, linearize(&t, &store).id);
    }

    #[test]
    fn sparse_build_counts_and_postings() {
        let idx = SparseIndex::build(&corpus()).unwrap();
        assert_eq!(idx.doc_count(), 3);
        assert_eq!(idx.doc_lengths(), &[5, 5, 5]);
        assert!((idx.avg_doc_length() - 5.0).abs() < 1e-12);
        // hand count: "blunt" twice in d1, once in d2
        assert_eq!(idx.postings("blunt"), vec![("d1", 2), ("d2", 1)]);
        assert_eq!(idx.postings("emily"), vec![("d1", 1), ("d2", 1)]);
        assert!(idx.postings("of").is_empty());
    }

    #[test]
    fn sparse_duplicate_id() {
        let mut c = corpus();
        c.push(Passage::text("d1", "", "again"));
        assert!(matches!(SparseIndex::build(&c), Err(IndexError::DuplicateId(id)) if id == "d1"));
    }

    #[test]
    fn sparse_ranks_sibling_doc_first() {
        let idx = SparseIndex::build(&corpus()).unwrap();
        let hits = idx.search("sibling of emily blunt", 2);
        assert_eq!(hits[0].passage_id, "d1");
        assert!(hits.iter().all(|h| h.score > 0.0));
    }

    #[test]
    fn sparse_edge_cases() {
        let idx = SparseIndex::build(&corpus()).unwrap();
        assert!(idx.search("zebra quantum", 5).is_empty());
        let all = idx.search("emily friedman sibling", 10);
        assert!(all.len() <= 3);
        assert!(all.windows(2).all(|w| w[0].score >= w[1].score));
        let empty = SparseIndex::build(&[]).unwrap();
        assert_eq!(empty.doc_count(), 0);
        assert!(empty.search("anything", 3).is_empty());
    }

    struct Fixed;
    impl EmbeddingProvider for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
            Ok(texts
                .iter()
                .map(|t| if t.contains("alpha") { vec![1.0, 0.0] } else { vec![0.0, 2.0] })
                .collect())
        }
    }

    struct Down;
    impl EmbeddingProvider for Down {
        fn name(&self) -> &str {
            "down"
        }
        fn embed(&self, _: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
            Err(ProviderError::Unavailable("connection refused".into()))
        }
    }

    struct Ragged;
    impl EmbeddingProvider for Ragged {
        fn name(&self) -> &str {
            "ragged"
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
            Ok(texts.iter().map(|t| vec![1.0; t.len() % 3 + 1]).collect())
        }
    }

    fn two() -> Vec<Passage> {
        vec![Passage::text("a", "", "alpha"), Passage::text("b", "", "beta")]
    }

    #[test]
    fn dense_orthogonal_stub() {
        let idx = DenseIndex::embed_corpus(&two(), &Fixed, 1, 2).unwrap();
        assert_eq!(idx.len(), 2);
        let hits = idx.search("alpha", 2, &Fixed).unwrap();
        assert_eq!(hits[0].passage_id, "a");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert_eq!(hits[1].score, 0.0);
        let norm: f64 = idx.vector("b").unwrap().iter().map(|x| f64::from(*x).powi(2)).sum();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dense_provider_errors() {
        assert!(matches!(
            DenseIndex::embed_corpus(&two(), &Down, 8, 1),
            Err(IndexError::Provider(ProviderError::Unavailable(_)))
        ));
        let texts = vec![Passage::text("a", "", "x"), Passage::text("b", "", "xy")];
        assert!(matches!(
            DenseIndex::embed_corpus(&texts, &Ragged, 8, 1),
            Err(IndexError::Provider(ProviderError::DimensionMismatch { .. }))
        ));
        let idx = DenseIndex::embed_corpus(&two(), &Fixed, 8, 1).unwrap();
        assert!(idx.search("alpha", 1, &Down).is_err());
    }

    #[test]
    fn dense_self_retrieval_with_hashing_embedder() {
        let e = HashingEmbedder::default();
        let c = corpus();
        let idx = DenseIndex::embed_corpus(&c, &e, 2, 2).unwrap();
        for p in &c {
            let hits = idx.search(&p.embedding_text(), 1, &e).unwrap();
            assert_eq!(hits[0].passage_id, p.id);
            assert!(hits[0].score <= 1.0 + 1e-9 && hits[0].score >= -1.0);
        }
    }
}
