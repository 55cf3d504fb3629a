use std::collections::BTreeSet;
use std::fmt;

use crate::kb::{EntityId, RelationId};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Variable(String),
    Entity(EntityId),
    Relation(RelationId),
    Literal(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Variable(name.into())
    }

    pub fn as_variable(&self) -> Option<&str> {
        match self {
            Term::Variable(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Variable(v) => write!(f, "?{v}"),
            Term::Entity(id) => write!(f, "wd:{id}"),
            Term::Relation(id) => write!(f, "wdt:{id}"),
            Term::Literal(text) => {
                f.write_str("\"")?;
                for c in text.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl TriplePattern {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }

    pub fn terms(&self) -> [&Term; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.terms().into_iter().filter_map(Term::as_variable)
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Projection {
    SelectVar(String),
    Count { variable: String, alias: String },
}

impl Projection {
    /// The pattern variable the projection reads.
    pub fn variable(&self) -> &str {
        match self {
            Projection::SelectVar(v) => v,
            Projection::Count { variable, .. } => variable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparqlQuery {
    pub projection: Projection,
    pub patterns: Vec<TriplePattern>,
}

impl SparqlQuery {
    /// Variables occurring in the patterns, sorted by name.
    pub fn pattern_variables(&self) -> BTreeSet<&str> {
        self.patterns.iter().flat_map(|p| p.variables()).collect()
    }

    /// Whether every pattern is reachable from the projected variable through
    /// shared variables. Constant-only patterns count as disconnected.
    pub fn is_connected(&self) -> bool {
        let mut reached: BTreeSet<&str> = BTreeSet::new();
        reached.insert(self.projection.variable());
        let mut done = vec![false; self.patterns.len()];
        loop {
            let mut progressed = false;
            for (i, p) in self.patterns.iter().enumerate() {
                if !done[i] && p.variables().any(|v| reached.contains(v)) {
                    done[i] = true;
                    reached.extend(p.variables());
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        done.into_iter().all(|d| d)
    }
}

/// Canonical single-space rendering.
impl fmt::Display for SparqlQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.projection {
            Projection::SelectVar(v) => write!(f, "SELECT ?{v} WHERE {{")?,
            Projection::Count { variable, alias } => {
                write!(f, "SELECT (COUNT(?{variable}) AS ?{alias}) WHERE {{")?
            }
        }
        for p in &self.patterns {
            write!(f, " {p}")?;
        }
        f.write_str(" }")
    }
}
