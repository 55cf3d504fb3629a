//! Entity linking for generated symbolic queries.
//!
//! A mention emitted by the LLM is matched against catalog labels, aliases,
//! and (fuzzily) their token sets. Candidates are then disambiguated by the
//! similarity between the surrounding query and each entity's description.
//! The chosen id replaces whatever QID the model wrote into its SPARQL.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{Entity, EntityId, RelationId, TripleStore};
use crate::providers::{cosine, EmbeddingProvider};
use crate::sparql::{SparqlQuery, Term};
use crate::text_index::{content_tokens, tokenize};

pub const DEFAULT_CANDIDATE_CAP: usize = 10;
pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.5;

const ALIAS_SCORE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("no catalog entity matches the query entity")]
    NoEntityMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMethod {
    ExactLabel,
    Alias,
    Fuzzy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCandidate {
    pub entity: Entity,
    pub method: LinkMethod,
    pub lexical_score: f64,
    pub description_score: f64,
    /// Score the candidates are ranked by.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub chosen: Option<EntityId>,
    pub method: Option<LinkMethod>,
    pub candidates: Vec<LinkCandidate>,
}

impl LinkResult {
    pub fn none() -> Self {
        Self {
            chosen: None,
            method: None,
            candidates: Vec::new(),
        }
    }

    pub fn contains(&self, id: EntityId) -> bool {
        self.candidates.iter().any(|c| c.entity.id == id)
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

#[derive(Debug)]
pub struct EntityLinker<'a> {
    store: &'a TripleStore,
    cap: usize,
    fuzzy_threshold: f64,
}

impl<'a> EntityLinker<'a> {
    pub fn new(store: &'a TripleStore) -> Self {
        Self {
            store,
            cap: DEFAULT_CANDIDATE_CAP,
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap.max(1);
        self
    }

    pub fn with_fuzzy_threshold(mut self, threshold: f64) -> Self {
        self.fuzzy_threshold = threshold;
        self
    }

    fn lexical_match(&self, mention: &str, entity: &Entity) -> Option<(LinkMethod, f64)> {
        let folded = mention.trim().to_lowercase();
        if entity.label.to_lowercase() == folded {
            return Some((LinkMethod::ExactLabel, 1.0));
        }
        if entity.aliases.iter().any(|a| a.to_lowercase() == folded) {
            return Some((LinkMethod::Alias, ALIAS_SCORE));
        }
        let mention_tokens = token_set(mention);
        let best = std::iter::once(&entity.label)
            .chain(&entity.aliases)
            .map(|name| jaccard(&mention_tokens, &token_set(name)))
            .fold(0.0, f64::max);
        (best >= self.fuzzy_threshold).then_some((LinkMethod::Fuzzy, best))
    }

    /// Links `mention` to a catalog entity. Candidates come from the first
    /// non-empty tier of exact label, alias, fuzzy token overlap. With an
    /// embedding provider they are ranked by cosine similarity between
    /// `context_query` and each entity description; otherwise by lexical score.
    pub fn link(
        &self,
        mention: &str,
        context_query: &str,
        provider: Option<&dyn EmbeddingProvider>,
    ) -> LinkResult {
        if mention.trim().is_empty() {
            return LinkResult::none();
        }
        let mut candidates: Vec<LinkCandidate> = self
            .store
            .entities()
            .filter_map(|e| {
                self.lexical_match(mention, e).map(|(method, lexical)| LinkCandidate {
                    entity: e.clone(),
                    method,
                    lexical_score: lexical,
                    description_score: 0.0,
                    score: lexical,
                })
            })
            .collect();
        // tiers cascade: aliases only when no label matches, fuzzy only when neither
        let Some(tier) = candidates.iter().map(|c| c.method).min() else {
            return LinkResult::none();
        };
        candidates.retain(|c| c.method == tier);
        if let Some(provider) = provider {
            match self.description_scores(context_query, &candidates, provider) {
                Ok(scores) => {
                    for (c, s) in candidates.iter_mut().zip(scores) {
                        c.description_score = s;
                        c.score = s;
                    }
                }
                Err(e) => tracing::warn!(error = %e, "description similarity unavailable, using lexical scores"),
            }
        }
        candidates.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.entity.id.cmp(&b.entity.id))
        });
        candidates.truncate(self.cap);
        LinkResult {
            chosen: Some(candidates[0].entity.id),
            method: Some(candidates[0].method),
            candidates,
        }
    }

    fn description_scores(
        &self,
        context_query: &str,
        candidates: &[LinkCandidate],
        provider: &dyn EmbeddingProvider,
    ) -> Result<Vec<f64>, crate::providers::ProviderError> {
        let mut texts = vec![context_query.to_string()];
        texts.extend(candidates.iter().map(|c| {
            if c.entity.description.is_empty() {
                c.entity.label.clone()
            } else {
                c.entity.description.clone()
            }
        }));
        let vectors = provider.embed(&texts)?;
        if vectors.len() != texts.len() {
            return Err(crate::providers::ProviderError::CardinalityMismatch {
                expected: texts.len(),
                got: vectors.len(),
            });
        }
        Ok(vectors[1..].iter().map(|v| cosine(&vectors[0], v)).collect())
    }

    /// Rewrites entity subjects to the linked id, and replaces predicates
    /// missing from the catalog with the relation best matching `hint` (the
    /// search query) and the query's variable names.
    pub fn repair_sparql(
        &self,
        query: &SparqlQuery,
        link: &LinkResult,
        hint: &str,
    ) -> Result<SparqlQuery, LinkError> {
        let chosen = link.chosen.ok_or(LinkError::NoEntityMatch)?;
        let mut words: BTreeSet<String> = content_tokens(hint);
        for v in query.pattern_variables() {
            words.extend(content_tokens(v));
        }
        let mut repaired = query.clone();
        for p in &mut repaired.patterns {
            if matches!(p.subject, Term::Entity(_)) {
                p.subject = Term::Entity(chosen);
            }
            if let Term::Relation(pid) = p.predicate {
                if self.store.relation(pid).is_none() {
                    if let Some(better) = self.best_relation(&words) {
                        tracing::debug!(from = %pid, to = %better, "repaired unknown relation");
                        p.predicate = Term::Relation(better);
                    }
                }
            }
        }
        Ok(repaired)
    }

    fn best_relation(&self, words: &BTreeSet<String>) -> Option<RelationId> {
        let mut best: Option<(f64, RelationId)> = None;
        for r in self.store.relations() {
            let score = std::iter::once(&r.label)
                .chain(&r.aliases)
                .map(|name| {
                    let toks = content_tokens(name);
                    if toks.is_empty() {
                        0.0
                    } else {
                        toks.intersection(words).count() as f64 / toks.len() as f64
                    }
                })
                .fold(0.0, f64::max);
            if score > 0.0 && best.is_none_or(|(s, _)| score > s) {
                best = Some((score, r.id));
            }
        }
        best.map(|(_, id)| id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{Relation, RelationId};
    use crate::providers::HashingEmbedder;
    use crate::sparql::parse;

    fn store() -> TripleStore {
        TripleStore::builder()
            .entity(
                Entity::new(EntityId::new(962183), "David Resnick")
                    .with_description("Brazilian-American geneticist"),
            )
            .entity(
                Entity::new(EntityId::new(308), "Mercury")
                    .with_description("planet closest to the Sun in the Solar System"),
            )
            .entity(
                Entity::new(EntityId::new(925), "Mercury")
                    .with_description("chemical element with symbol Hg and atomic number 80"),
            )
            .entity(Entity::new(EntityId::new(42), "Douglas Adams").with_aliases(["DNA"]))
            .relation(
                Relation::new(RelationId::new(19), "place of birth")
                    .with_aliases(["birthplace", "born in"]),
            )
            .relation(Relation::new(RelationId::new(463), "member of"))
            .build()
            .unwrap()
    }

    #[test]
    fn exact_label_link() {
        let s = store();
        let r = EntityLinker::new(&s).link("David Resnick", "Where was David Resnick born?", None);
        assert_eq!(r.chosen, Some(EntityId::new(962183)));
        assert_eq!(r.method, Some(LinkMethod::ExactLabel));
    }

    #[test]
    fn alias_and_fuzzy_links() {
        let s = store();
        let l = EntityLinker::new(&s);
        let r = l.link("dna", "", None);
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.chosen, Some(EntityId::new(42)));
        assert_eq!(r.method, Some(LinkMethod::Alias));
        let r = l.link("Resnick, David", "", None);
        assert_eq!(r.chosen, Some(EntityId::new(962183)));
        assert_eq!(r.method, Some(LinkMethod::Fuzzy));
    }

    #[test]
    fn no_overlap_means_no_link() {
        let s = store();
        let r = EntityLinker::new(&s).link("Zanzibar", "", None);
        assert_eq!(r, LinkResult::none());
    }

    #[test]
    fn description_disambiguates_shared_label() {
        let s = store();
        let e = HashingEmbedder::default();
        let l = EntityLinker::new(&s);
        let r = l.link("Mercury", "the planet closest to the sun", Some(&e));
        assert_eq!(r.chosen, Some(EntityId::new(308)));
        assert_eq!(r.candidates.len(), 2);
        let r = l.link("Mercury", "which chemical element has atomic number 80", Some(&e));
        assert_eq!(r.chosen, Some(EntityId::new(925)));
        // lexical tie falls back to ascending id
        assert_eq!(l.link("Mercury", "", None).chosen, Some(EntityId::new(308)));
    }

    #[test]
    fn chosen_is_always_a_candidate_and_in_catalog() {
        let s = store();
        let l = EntityLinker::new(&s);
        for m in ["Mercury", "David", "Adams Douglas", "dna", "x"] {
            let r = l.link(m, "ctx", None);
            if let Some(id) = r.chosen {
                assert!(r.contains(id));
                assert!(s.entity(id).is_some());
            }
        }
    }

    #[test]
    fn repair_rewrites_subject_and_unknown_relation() {
        let s = store();
        let l = EntityLinker::new(&s);
        let link = l.link("David Resnick", "", None);
        let q = parse("SELECT ?place WHERE {wd:Q42 wdt:P19 ?place.}").unwrap();
        let fixed = l.repair_sparql(&q, &link, "Where was David Resnick born?").unwrap();
        assert_eq!(fixed.to_string(), "SELECT ?place WHERE { wd:Q962183 wdt:P19 ?place . }");

        let q = parse("SELECT ?x WHERE {wd:Q42 wdt:P9999 ?x.}").unwrap();
        let fixed = l.repair_sparql(&q, &link, "Where was David Resnick born?").unwrap();
        assert_eq!(fixed.patterns[0].predicate, Term::Relation(RelationId::new(19)));

        // known relation stays even if the hint suggests another
        let q = parse("SELECT ?x WHERE {wd:Q42 wdt:P463 ?x.}").unwrap();
        let fixed = l.repair_sparql(&q, &link, "Where was he born?").unwrap();
        assert_eq!(fixed.patterns[0].predicate, Term::Relation(RelationId::new(463)));

        assert_eq!(
            l.repair_sparql(&q, &LinkResult::none(), ""),
            Err(LinkError::NoEntityMatch)
        );
    }

    #[test]
    fn exact_label_tier_shadows_fuzzy() {
        let s = TripleStore::builder()
            .entity(Entity::new(EntityId::new(33866), "Theodore Roosevelt"))
            .entity(
                Entity::new(EntityId::new(5), "Theodore Roosevelt Jr.")
                    .with_description("son of Theodore Roosevelt"),
            )
            .build()
            .unwrap();
        let e = HashingEmbedder::default();
        let r = EntityLinker::new(&s).link("Theodore Roosevelt", "son of Theodore Roosevelt", Some(&e));
        assert_eq!(r.chosen, Some(EntityId::new(33866)));
        assert_eq!(r.candidates.len(), 1);
        let r = EntityLinker::new(&s).link("Roosevelt Jr", "", None);
        assert_eq!(r.chosen, Some(EntityId::new(5)));
    }

    #[test]
    fn candidate_cap() {
        let mut b = TripleStore::builder();
        for i in 0..25 {
            b = b.entity(Entity::new(EntityId::new(i), "John Smith"));
        }
        let s = b.build().unwrap();
        let r = EntityLinker::new(&s).link("John Smith", "", None);
        assert_eq!(r.candidates.len(), DEFAULT_CANDIDATE_CAP);
        assert_eq!(r.chosen, Some(EntityId::new(0)));
    }
}
