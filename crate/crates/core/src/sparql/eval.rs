use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Projection, SparqlQuery, Term, TriplePattern};
use crate::kb::{EntityId, ObjectValue, RelationId, Triple, TripleStore};

/// A value bound to a query variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    Entity(EntityId),
    Relation(RelationId),
    Literal(String),
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Entity(id) => id.fmt(f),
            Binding::Relation(id) => id.fmt(f),
            Binding::Literal(s) => f.write_str(s),
        }
    }
}

impl From<&ObjectValue> for Binding {
    fn from(o: &ObjectValue) -> Self {
        match o {
            ObjectValue::Entity(id) => Binding::Entity(*id),
            ObjectValue::Literal(s) => Binding::Literal(s.clone()),
        }
    }
}

pub type BindingRow = BTreeMap<String, Binding>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultSet {
    /// Distinct solutions over every pattern variable, in ascending order.
    Rows(Vec<BindingRow>),
    CountValue { alias: String, value: u64 },
}

impl ResultSet {
    pub fn is_empty(&self) -> bool {
        match self {
            ResultSet::Rows(rows) => rows.is_empty(),
            ResultSet::CountValue { .. } => false,
        }
    }
}

/// Evaluates the conjunctive pattern with an index-backed nested-loop join,
/// binding the most selective remaining pattern first.
pub fn evaluate(query: &SparqlQuery, store: &TripleStore) -> ResultSet {
    if !query.is_connected() {
        tracing::warn!(query = %query, "disconnected graph pattern evaluated as a cross product");
    }
    let solutions = solve(&query.patterns, store);
    match &query.projection {
        Projection::SelectVar(_) => ResultSet::Rows(solutions.into_iter().collect()),
        Projection::Count { variable, alias } => {
            let distinct: BTreeSet<&Binding> =
                solutions.iter().filter_map(|row| row.get(variable)).collect();
            ResultSet::CountValue {
                alias: alias.clone(),
                value: distinct.len() as u64,
            }
        }
    }
}

fn solve(patterns: &[TriplePattern], store: &TripleStore) -> BTreeSet<BindingRow> {
    let mut remaining: Vec<&TriplePattern> = patterns.iter().collect();
    let mut bound: BTreeSet<&str> = BTreeSet::new();
    let mut partial: Vec<BindingRow> = vec![BindingRow::new()];
    while !remaining.is_empty() && !partial.is_empty() {
        let next = pick_pattern(&remaining, &bound, store);
        let pattern = remaining.remove(next);
        let mut extended = Vec::new();
        for row in &partial {
            extend(pattern, row, store, &mut extended);
        }
        bound.extend(pattern.variables());
        partial = extended;
    }
    if !remaining.is_empty() {
        return BTreeSet::new();
    }
    partial.into_iter().collect()
}

/// Index of the pattern with the most bound positions; ties go to the pattern
/// with fewer constant-only matches, then to the earlier pattern.
fn pick_pattern(remaining: &[&TriplePattern], bound: &BTreeSet<&str>, store: &TripleStore) -> usize {
    let boundness = |p: &TriplePattern| {
        p.terms()
            .into_iter()
            .filter(|t| match t {
                Term::Variable(v) => bound.contains(v.as_str()),
                _ => true,
            })
            .count()
    };
    let estimate = |p: &TriplePattern| {
        let s = match &p.subject {
            Term::Entity(id) => Some(*id),
            _ => None,
        };
        let pr = match &p.predicate {
            Term::Relation(id) => Some(*id),
            _ => None,
        };
        let o = match &p.object {
            Term::Entity(id) => Some(ObjectValue::Entity(*id)),
            Term::Literal(s) => Some(ObjectValue::Literal(s.clone())),
            _ => None,
        };
        store.match_count(s, pr, o.as_ref())
    };
    let mut best = 0;
    let mut best_key = (usize::MAX, usize::MAX);
    for (i, p) in remaining.iter().enumerate() {
        let key = (3 - boundness(p), estimate(p));
        if key < best_key {
            best_key = key;
            best = i;
        }
    }
    best
}

enum Slot<T> {
    Fixed(T),
    Free,
    Impossible,
}

fn subject_slot(term: &Term, row: &BindingRow) -> Slot<EntityId> {
    match term {
        Term::Entity(id) => Slot::Fixed(*id),
        Term::Variable(v) => match row.get(v) {
            None => Slot::Free,
            Some(Binding::Entity(id)) => Slot::Fixed(*id),
            Some(_) => Slot::Impossible,
        },
        _ => Slot::Impossible,
    }
}

fn predicate_slot(term: &Term, row: &BindingRow) -> Slot<RelationId> {
    match term {
        Term::Relation(id) => Slot::Fixed(*id),
        Term::Variable(v) => match row.get(v) {
            None => Slot::Free,
            Some(Binding::Relation(id)) => Slot::Fixed(*id),
            Some(_) => Slot::Impossible,
        },
        _ => Slot::Impossible,
    }
}

fn object_slot(term: &Term, row: &BindingRow) -> Slot<ObjectValue> {
    match term {
        Term::Entity(id) => Slot::Fixed(ObjectValue::Entity(*id)),
        Term::Literal(s) => Slot::Fixed(ObjectValue::Literal(s.clone())),
        Term::Variable(v) => match row.get(v) {
            None => Slot::Free,
            Some(Binding::Entity(id)) => Slot::Fixed(ObjectValue::Entity(*id)),
            Some(Binding::Literal(s)) => Slot::Fixed(ObjectValue::Literal(s.clone())),
            Some(Binding::Relation(_)) => Slot::Impossible,
        },
        Term::Relation(_) => Slot::Impossible,
    }
}

fn fixed<T>(slot: Slot<T>) -> Result<Option<T>, ()> {
    match slot {
        Slot::Fixed(v) => Ok(Some(v)),
        Slot::Free => Ok(None),
        Slot::Impossible => Err(()),
    }
}

fn extend(pattern: &TriplePattern, row: &BindingRow, store: &TripleStore, out: &mut Vec<BindingRow>) {
    let (Ok(s), Ok(p), Ok(o)) = (
        fixed(subject_slot(&pattern.subject, row)),
        fixed(predicate_slot(&pattern.predicate, row)),
        fixed(object_slot(&pattern.object, row)),
    ) else {
        return;
    };
    let matches: Vec<Triple> = if s.is_none() && p.is_none() && o.is_none() {
        store.triples().to_vec()
    } else {
        store.lookup(s, p, o.as_ref()).unwrap_or_default()
    };
    for t in matches {
        let mut next = row.clone();
        let ok = bind(&mut next, &pattern.subject, Binding::Entity(t.subject))
            && bind(&mut next, &pattern.predicate, Binding::Relation(t.predicate))
            && bind(&mut next, &pattern.object, Binding::from(&t.object));
        if ok {
            out.push(next);
        }
    }
}

/// Binds a variable term, or checks consistency when it is already bound
/// (a variable may repeat within one pattern).
fn bind(row: &mut BindingRow, term: &Term, value: Binding) -> bool {
    match term {
        Term::Variable(v) => match row.get(v) {
            Some(existing) => *existing == value,
            None => {
                row.insert(v.clone(), value);
                true
            }
        },
        _ => true,
    }
}

fn binding_label(store: &TripleStore, b: &Binding) -> String {
    match b {
        Binding::Entity(id) => store.entity_label(*id),
        Binding::Relation(id) => store.relation_label(*id),
        Binding::Literal(s) => s.clone(),
    }
}

fn term_label(store: &TripleStore, term: &Term, row: &BindingRow) -> String {
    match term {
        Term::Variable(v) => row
            .get(v)
            .map(|b| binding_label(store, b))
            .unwrap_or_else(|| format!("?{v}")),
        Term::Entity(id) => store.entity_label(*id),
        Term::Relation(id) => store.relation_label(*id),
        Term::Literal(s) => s.clone(),
    }
}

/// Renders a result set as short evidence lines for an LLM context. Each row
/// becomes `<subject> <relation> <object>` per pattern (patterns joined with
/// `"; "`); a count becomes the patterns followed by `: count = <n>`.
pub fn render_evidence(result: &ResultSet, query: &SparqlQuery, store: &TripleStore) -> Vec<String> {
    match result {
        ResultSet::CountValue { value, .. } => {
            vec![format!("{}: count = {value}", render_patterns(query, store, &BindingRow::new()))]
        }
        ResultSet::Rows(rows) => rows.iter().map(|row| render_patterns(query, store, row)).collect(),
    }
}

fn render_patterns(query: &SparqlQuery, store: &TripleStore, row: &BindingRow) -> String {
    query
        .patterns
        .iter()
        .map(|p| {
            format!(
                "{} {} {}",
                term_label(store, &p.subject, row),
                term_label(store, &p.predicate, row),
                term_label(store, &p.object, row)
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Answer strings carried by a result: the projected variable's label per row,
/// or the count.
pub fn answer_labels(result: &ResultSet, query: &SparqlQuery, store: &TripleStore) -> Vec<String> {
    match result {
        ResultSet::CountValue { value, .. } => vec![value.to_string()],
        ResultSet::Rows(rows) => {
            let var = query.projection.variable();
            let mut seen = BTreeSet::new();
            rows.iter()
                .filter_map(|row| row.get(var))
                .filter(|b| seen.insert((*b).clone()))
                .map(|b| match b {
                    Binding::Entity(id) => store.entity_label(*id),
                    Binding::Relation(id) => store.relation_label(*id),
                    Binding::Literal(s) => s.clone(),
                })
                .collect()
        }
    }
}
