//! Seeded generators and brute-force oracles shared by the property and
//! acceptance suites.

use std::collections::{BTreeMap, BTreeSet};

use hetqa_core::linker::{LinkCandidate, LinkMethod, LinkResult};
use hetqa_core::orchestrator::LinkAttempt;
use hetqa_core::kb::{Entity, EntityId, ObjectValue, Relation, RelationId, Triple, TripleStore};
use hetqa_core::sparql::{Binding, BindingRow, Projection, ResultSet, SparqlQuery, Term, TriplePattern};
use hetqa_core::text_index::Passage;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const LITERALS: [&str; 4] = ["1920", "blue", "say \"hi\"", "a\\b"];

/// A store with up to `max_triples` triples over a small id space, so joins
/// and duplicates are common. Returns the raw triple list alongside.
pub fn random_store(rng: &mut ChaCha8Rng, max_triples: usize) -> (TripleStore, Vec<Triple>) {
    let n_entities = rng.random_range(1..=12u64);
    let n_relations = rng.random_range(1..=4u64);
    let mut b = TripleStore::builder();
    for q in 1..=n_entities {
        b = b.entity(Entity::new(EntityId::new(q), format!("entity {q}")));
    }
    for p in 1..=n_relations {
        b = b.relation(Relation::new(RelationId::new(p), format!("relation {p}")));
    }
    let n = rng.random_range(0..=max_triples);
    let mut triples = Vec::with_capacity(n);
    for _ in 0..n {
        let object = if rng.random_bool(0.2) {
            ObjectValue::Literal(LITERALS.choose(rng).unwrap().to_string())
        } else {
            ObjectValue::Entity(EntityId::new(rng.random_range(1..=n_entities)))
        };
        let t = Triple::new(
            EntityId::new(rng.random_range(1..=n_entities)),
            RelationId::new(rng.random_range(1..=n_relations)),
            object,
        );
        triples.push(t.clone());
        b = b.triple(t);
    }
    (b.build().expect("generated store is consistent"), triples)
}

const VARS: [&str; 4] = ["x", "y", "z", "w"];

/// A conjunctive query of 1..=`max_patterns` patterns. Ids range a little past
/// the store's so some constants are absent.
pub fn random_query(rng: &mut ChaCha8Rng, max_patterns: usize) -> SparqlQuery {
    let n = rng.random_range(1..=max_patterns);
    let var = |rng: &mut ChaCha8Rng| Term::var(*VARS.choose(rng).unwrap());
    let patterns: Vec<TriplePattern> = (0..n)
        .map(|_| {
            let subject = if rng.random_bool(0.6) {
                var(rng)
            } else {
                Term::Entity(EntityId::new(rng.random_range(1..=14)))
            };
            let predicate = if rng.random_bool(0.2) {
                var(rng)
            } else {
                Term::Relation(RelationId::new(rng.random_range(1..=5)))
            };
            let object = match rng.random_range(0..10) {
                0..=5 => var(rng),
                6..=8 => Term::Entity(EntityId::new(rng.random_range(1..=14))),
                _ => Term::Literal(LITERALS.choose(rng).unwrap().to_string()),
            };
            TriplePattern::new(subject, predicate, object)
        })
        .collect();
    let mut vars: Vec<String> = patterns
        .iter()
        .flat_map(|p| p.variables().map(str::to_string).collect::<Vec<_>>())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut patterns = patterns;
    if vars.is_empty() {
        patterns[0].object = Term::var("x");
        vars.push("x".into());
    }
    let target = vars.choose(rng).unwrap().clone();
    let projection = if rng.random_bool(0.3) {
        Projection::Count {
            variable: target,
            alias: "count".into(),
        }
    } else {
        Projection::SelectVar(target)
    };
    SparqlQuery { projection, patterns }
}

/// A syntactically valid AST with arbitrary variable names and literals, for
/// printer/parser round trips.
pub fn random_ast(rng: &mut ChaCha8Rng) -> SparqlQuery {
    const NAMES: [&str; 6] = ["x", "place", "name_2", "organization", "é", "COUNT"];
    const TEXT: [&str; 8] = ["", "Rio", "say \"hi\"", "back\\slash", "line\nbreak", "tab\there", "ünï", "{ . }"];
    let name = |rng: &mut ChaCha8Rng| NAMES.choose(rng).unwrap().to_string();
    let mut q = random_query(rng, 4);
    for p in &mut q.patterns {
        for t in [&mut p.subject, &mut p.predicate, &mut p.object] {
            match t {
                Term::Variable(v) => *v = name(rng),
                Term::Literal(s) => *s = TEXT.choose(rng).unwrap().to_string(),
                Term::Entity(id) => *id = EntityId::new(rng.random_range(0..u64::from(u32::MAX))),
                Term::Relation(id) => *id = RelationId::new(rng.random_range(0..100_000)),
            }
        }
    }
    let vars: Vec<String> = q.pattern_variables().into_iter().map(str::to_string).collect();
    let var = if vars.is_empty() {
        q.patterns[0].subject = Term::var("s");
        "s".to_string()
    } else {
        vars.choose(rng).unwrap().clone()
    };
    q.projection = if rng.random_bool(0.5) {
        Projection::Count {
            variable: var,
            alias: name(rng),
        }
    } else {
        Projection::SelectVar(var)
    };
    q
}

fn unify(term: &Term, value: Binding, row: &mut BindingRow) -> bool {
    match term {
        Term::Variable(v) => match row.get(v) {
            Some(bound) => *bound == value,
            None => {
                row.insert(v.clone(), value);
                true
            }
        },
        Term::Entity(id) => value == Binding::Entity(*id),
        Term::Relation(id) => value == Binding::Relation(*id),
        Term::Literal(s) => value == Binding::Literal(s.clone()),
    }
}

/// Brute-force evaluation: every pattern tries every triple, in order.
pub fn brute_force(query: &SparqlQuery, triples: &[Triple]) -> ResultSet {
    let mut rows = vec![BindingRow::new()];
    for p in &query.patterns {
        let mut next = Vec::new();
        for row in &rows {
            for t in triples {
                let mut r = row.clone();
                let object = match &t.object {
                    ObjectValue::Entity(id) => Binding::Entity(*id),
                    ObjectValue::Literal(s) => Binding::Literal(s.clone()),
                };
                if unify(&p.subject, Binding::Entity(t.subject), &mut r)
                    && unify(&p.predicate, Binding::Relation(t.predicate), &mut r)
                    && unify(&p.object, object, &mut r)
                {
                    next.push(r);
                }
            }
        }
        rows = next;
    }
    let distinct: BTreeSet<BindingRow> = rows.into_iter().collect();
    match &query.projection {
        Projection::SelectVar(_) => ResultSet::Rows(distinct.into_iter().collect()),
        Projection::Count { variable, alias } => ResultSet::CountValue {
            alias: alias.clone(),
            value: distinct.iter().filter_map(|r| r.get(variable)).collect::<BTreeSet<_>>().len() as u64,
        },
    }
}

const WORDS: [&str; 10] = ["emily", "blunt", "rio", "born", "award", "the", "of", "nobel", "bay", "x"];

pub fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<Passage> {
    let n = rng.random_range(1..=8);
    (0..n)
        .map(|i| {
            let len = rng.random_range(0..=12);
            let body: Vec<&str> = (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect();
            Passage::text(format!("d{i}"), "", body.join(if rng.random_bool(0.5) { " " } else { ", " }))
        })
        .collect()
}

pub fn random_text(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.random_range(0..=max_words);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Textbook Okapi BM25 (k1 1.2, b 0.75, idf floored at 0), recomputed from
/// raw text with no index. Query words count once each.
pub fn bm25_direct(corpus: &[Passage], query: &str) -> BTreeMap<String, f64> {
    let split = |s: &str| -> Vec<String> {
        s.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect()
    };
    let docs: Vec<Vec<String>> = corpus.iter().map(|p| split(&p.body)).collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms: BTreeSet<String> = split(query).into_iter().collect();
    let mut out = BTreeMap::new();
    for (p, doc) in corpus.iter().zip(&docs) {
        let mut score = 0.0;
        let mut matched = false;
        for term in &terms {
            let tf = doc.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
            let idf = f64::max(0.0, ((n - df + 0.5) / (df + 0.5)).ln());
            score += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * doc.len() as f64 / avg));
        }
        if matched {
            out.insert(p.id.clone(), score);
        }
    }
    out
}

/// A link attempt over entities Q1..Q4 whose repaired query uses P1 or P2.
/// The chosen entity, when present, is the top candidate.
pub fn random_attempt(rng: &mut ChaCha8Rng) -> Option<LinkAttempt> {
    if rng.random_bool(0.1) {
        return None;
    }
    let mut ids: Vec<u64> = (1..=4).filter(|_| rng.random_bool(0.5)).collect();
    ids.sort_by_key(|_| rng.random::<u32>());
    let candidates: Vec<LinkCandidate> = ids
        .iter()
        .map(|&id| LinkCandidate {
            entity: Entity::new(EntityId::new(id), format!("entity {id}")),
            method: LinkMethod::ExactLabel,
            lexical_score: 1.0,
            description_score: 0.0,
            score: 1.0,
        })
        .collect();
    let chosen = candidates.first().filter(|_| rng.random_bool(0.8)).map(|c| c.entity.id);
    let repaired = chosen.map(|id| {
        let p = rng.random_range(1..=2);
        format!("SELECT ?o WHERE {{ wd:{id} wdt:P{p} ?o . }}")
    });
    Some(LinkAttempt {
        mention: "m".into(),
        context_query: "q".into(),
        generated_sparql: String::new(),
        result: LinkResult {
            chosen,
            method: chosen.map(|_| LinkMethod::ExactLabel),
            candidates,
        },
        repaired_sparql: repaired,
        error: None,
    })
}
