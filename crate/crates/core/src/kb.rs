//! In-memory knowledge-base store.
//!
//! Holds a Wikidata-style subset: an entity catalog, a relation catalog and a
//! multiset of triples indexed three ways (SPO, POS, OSP). The store is
//! immutable once built and can be shared freely between readers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("dangling reference to {0}")]
    DanglingReference(String),
    #[error("duplicate catalog id {0}")]
    DuplicateId(String),
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error("invalid catalog record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("lookup requires at least one bound position")]
    UnboundLookup,
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

macro_rules! wikidata_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(u64);

        impl $name {
            pub const fn new(n: u64) -> Self {
                Self(n)
            }

            pub const fn number(self) -> u64 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = KbError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let digits = s
                    .strip_prefix($prefix)
                    .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                    .ok_or_else(|| KbError::InvalidId(s.to_string()))?;
                digits
                    .parse::<u64>()
                    .map(Self)
                    .map_err(|_| KbError::InvalidId(s.to_string()))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

wikidata_id!(EntityId, "Q");
wikidata_id!(RelationId, "P");

/// Object position of a triple: another entity or a raw literal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectValue {
    Entity(EntityId),
    Literal(String),
}

impl ObjectValue {
    pub fn as_entity(&self) -> Option<EntityId> {
        match self {
            ObjectValue::Entity(id) => Some(*id),
            ObjectValue::Literal(_) => None,
        }
    }
}

impl fmt::Display for ObjectValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectValue::Entity(id) => id.fmt(f),
            ObjectValue::Literal(text) => write!(f, "{text:?}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    qid: Option<EntityId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    literal: Option<String>,
}

impl Serialize for ObjectValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let record = match self {
            ObjectValue::Entity(id) => ObjectRecord {
                qid: Some(*id),
                literal: None,
            },
            ObjectValue::Literal(text) => ObjectRecord {
                qid: None,
                literal: Some(text.clone()),
            },
        };
        record.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ObjectValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match ObjectRecord::deserialize(deserializer)? {
            ObjectRecord {
                qid: Some(id),
                literal: None,
            } => Ok(ObjectValue::Entity(id)),
            ObjectRecord {
                qid: None,
                literal: Some(text),
            } => Ok(ObjectValue::Literal(text)),
            _ => Err(serde::de::Error::custom(
                "object must carry exactly one of \"qid\" or \"literal\"",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    #[serde(rename = "qid")]
    pub id: EntityId,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wikipedia_title: Option<String>,
}

impl Entity {
    pub fn new(id: EntityId, label: impl Into<String>) -> Self {
        Self {
            id,
            label: label.into(),
            description: String::new(),
            aliases: Vec::new(),
            wikipedia_title: None,
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn with_aliases<I, S>(mut self, aliases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.aliases = aliases.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_wikipedia_title(mut self, title: impl Into<String>) -> Self {
        self.wikipedia_title = Some(title.into());
        self
    }

    fn validate(&self) -> Result<(), String> {
        if self.label.trim().is_empty() {
            return Err("label is empty".into());
        }
        let mut seen = HashSet::new();
        for alias in &self.aliases {
            if !seen.insert(alias.to_lowercase()) {
                return Err(format!("duplicate alias {alias:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    #[serde(rename = "pid")]
    pub id: RelationId,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl Relation {
    pub fn new(id: RelationId, label: impl Into<String>) -> Self {
        Self {
            id,
            label: label.into(),
            aliases: Vec::new(),
        }
    }

    pub fn with_aliases<I, S>(mut self, aliases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.aliases = aliases.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: ObjectValue,
}

impl Triple {
    pub fn new(subject: EntityId, predicate: RelationId, object: ObjectValue) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }
}

/// Summary counts reported after ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCounts {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
}

type Counted<K> = BTreeMap<K, usize>;

#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    entities: BTreeMap<EntityId, Entity>,
    relations: BTreeMap<RelationId, Relation>,
    triples: Vec<Triple>,
    spo: BTreeMap<EntityId, BTreeMap<RelationId, Counted<ObjectValue>>>,
    pos: BTreeMap<RelationId, BTreeMap<ObjectValue, Counted<EntityId>>>,
    osp: BTreeMap<ObjectValue, BTreeMap<EntityId, Counted<RelationId>>>,
}

impl TripleStore {
    pub fn builder() -> TripleStoreBuilder {
        TripleStoreBuilder::default()
    }

    /// Loads the three line-delimited JSON files and validates referential
    /// integrity of every triple against the catalogs.
    pub fn ingest(
        entities_file: &Path,
        relations_file: &Path,
        triples_file: &Path,
    ) -> Result<Self, KbError> {
        let mut builder = Self::builder();
        for entity in read_records::<Entity>(entities_file)? {
            builder.try_add_entity(entity)?;
        }
        for relation in read_records::<Relation>(relations_file)? {
            builder.try_add_relation(relation)?;
        }
        for triple in read_records::<Triple>(triples_file)? {
            builder.add_triple(triple);
        }
        let store = builder.build()?;
        let counts = store.counts();
        tracing::info!(
            entities = counts.entities,
            relations = counts.relations,
            triples = counts.triples,
            "knowledge base loaded"
        );
        Ok(store)
    }

    /// Ingests `entities.jsonl`, `relations.jsonl` and `triples.jsonl` from a
    /// directory.
    pub fn ingest_dir(dir: &Path) -> Result<Self, KbError> {
        Self::ingest(
            &dir.join("entities.jsonl"),
            &dir.join("relations.jsonl"),
            &dir.join("triples.jsonl"),
        )
    }

    pub fn counts(&self) -> StoreCounts {
        StoreCounts {
            entities: self.entities.len(),
            relations: self.relations.len(),
            triples: self.triples.len(),
        }
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn relation(&self, id: RelationId) -> Option<&Relation> {
        self.relations.get(&id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    /// All triples in ingest order, duplicates included.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_label(&self, id: EntityId) -> String {
        self.entities
            .get(&id)
            .map(|e| e.label.clone())
            .unwrap_or_else(|| id.to_string())
    }

    pub fn relation_label(&self, id: RelationId) -> String {
        self.relations
            .get(&id)
            .map(|r| r.label.clone())
            .unwrap_or_else(|| id.to_string())
    }

    pub fn object_label(&self, object: &ObjectValue) -> String {
        match object {
            ObjectValue::Entity(id) => self.entity_label(*id),
            ObjectValue::Literal(text) => text.clone(),
        }
    }

    /// Triples matching every bound position, sorted by (subject, predicate,
    /// object). Unknown identifiers simply yield no matches.
    pub fn lookup(
        &self,
        subject: Option<EntityId>,
        predicate: Option<RelationId>,
        object: Option<&ObjectValue>,
    ) -> Result<Vec<Triple>, KbError> {
        let mut out = Vec::new();
        match (subject, predicate, object) {
            (None, None, None) => return Err(KbError::UnboundLookup),
            (Some(s), p, o) => {
                let Some(by_pred) = self.spo.get(&s) else {
                    return Ok(out);
                };
                let preds: Box<dyn Iterator<Item = (&RelationId, &Counted<ObjectValue>)>> = match p
                {
                    Some(p) => Box::new(by_pred.get_key_value(&p).into_iter()),
                    None => Box::new(by_pred.iter()),
                };
                for (p, objects) in preds {
                    match o {
                        Some(o) => {
                            if let Some(&n) = objects.get(o) {
                                push_n(&mut out, Triple::new(s, *p, o.clone()), n);
                            }
                        }
                        None => {
                            for (o, &n) in objects {
                                push_n(&mut out, Triple::new(s, *p, o.clone()), n);
                            }
                        }
                    }
                }
            }
            (None, Some(p), o) => {
                let Some(by_obj) = self.pos.get(&p) else {
                    return Ok(out);
                };
                let objs: Box<dyn Iterator<Item = (&ObjectValue, &Counted<EntityId>)>> = match o {
                    Some(o) => Box::new(by_obj.get_key_value(o).into_iter()),
                    None => Box::new(by_obj.iter()),
                };
                for (o, subjects) in objs {
                    for (s, &n) in subjects {
                        push_n(&mut out, Triple::new(*s, p, o.clone()), n);
                    }
                }
                out.sort();
            }
            (None, None, Some(o)) => {
                if let Some(by_subj) = self.osp.get(o) {
                    for (s, preds) in by_subj {
                        for (p, &n) in preds {
                            push_n(&mut out, Triple::new(*s, *p, o.clone()), n);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Number of triples with the given subject and predicate.
    pub fn object_count(&self, subject: EntityId, predicate: RelationId) -> usize {
        self.spo
            .get(&subject)
            .and_then(|m| m.get(&predicate))
            .map(|objects| objects.values().sum())
            .unwrap_or(0)
    }

    /// Number of stored triples matching a (possibly partial) pattern. Used by
    /// the query planner to pick selective patterns first.
    pub fn match_count(
        &self,
        subject: Option<EntityId>,
        predicate: Option<RelationId>,
        object: Option<&ObjectValue>,
    ) -> usize {
        match (subject, predicate, object) {
            (None, None, None) => self.triples.len(),
            (Some(s), Some(p), None) => self.object_count(s, p),
            (Some(s), None, None) => self
                .spo
                .get(&s)
                .map(|m| m.values().flat_map(|o| o.values()).sum())
                .unwrap_or(0),
            (None, Some(p), None) => self
                .pos
                .get(&p)
                .map(|m| m.values().flat_map(|s| s.values()).sum())
                .unwrap_or(0),
            (None, None, Some(o)) => self
                .osp
                .get(o)
                .map(|m| m.values().flat_map(|p| p.values()).sum())
                .unwrap_or(0),
            (s, p, o) => self.lookup(s, p, o).map(|v| v.len()).unwrap_or(0),
        }
    }

    /// Entities whose label or alias equals `text` after case-folding.
    pub fn entities_named(&self, text: &str) -> Vec<&Entity> {
        let folded = text.trim().to_lowercase();
        self.entities
            .values()
            .filter(|e| {
                e.label.to_lowercase() == folded
                    || e.aliases.iter().any(|a| a.to_lowercase() == folded)
            })
            .collect()
    }

    /// Entities whose `wikipedia_title` equals `title` after case-folding.
    pub fn entities_with_title(&self, title: &str) -> Vec<&Entity> {
        let folded = title.trim().to_lowercase();
        self.entities
            .values()
            .filter(|e| {
                e.wikipedia_title
                    .as_deref()
                    .is_some_and(|t| t.to_lowercase() == folded)
            })
            .collect()
    }

    /// Index consistency check: every index holds the same triple multiset.
    pub fn indexes_consistent(&self) -> bool {
        let mut from_scan: HashMap<&Triple, usize> = HashMap::new();
        for t in &self.triples {
            *from_scan.entry(t).or_default() += 1;
        }
        let mut spo = HashMap::new();
        for (s, preds) in &self.spo {
            for (p, objects) in preds {
                for (o, &n) in objects {
                    spo.insert(Triple::new(*s, *p, o.clone()), n);
                }
            }
        }
        let mut pos = HashMap::new();
        for (p, objects) in &self.pos {
            for (o, subjects) in objects {
                for (s, &n) in subjects {
                    pos.insert(Triple::new(*s, *p, o.clone()), n);
                }
            }
        }
        let mut osp = HashMap::new();
        for (o, subjects) in &self.osp {
            for (s, preds) in subjects {
                for (p, &n) in preds {
                    osp.insert(Triple::new(*s, *p, o.clone()), n);
                }
            }
        }
        let scan: HashMap<Triple, usize> =
            from_scan.into_iter().map(|(t, n)| (t.clone(), n)).collect();
        scan == spo && spo == pos && pos == osp
    }

    /// Every literal string appearing in object position, deduplicated.
    pub fn literals(&self) -> Vec<String> {
        let mut lits: Vec<String> = self
            .osp
            .keys()
            .filter_map(|o| match o {
                ObjectValue::Literal(s) => Some(s.clone()),
                ObjectValue::Entity(_) => None,
            })
            .collect();
        lits.dedup();
        lits
    }
}

fn push_n(out: &mut Vec<Triple>, triple: Triple, n: usize) {
    for _ in 1..n {
        out.push(triple.clone());
    }
    out.push(triple);
}

#[derive(Debug, Default)]
pub struct TripleStoreBuilder {
    entities: BTreeMap<EntityId, Entity>,
    relations: BTreeMap<RelationId, Relation>,
    triples: Vec<Triple>,
}

impl TripleStoreBuilder {
    pub fn try_add_entity(&mut self, entity: Entity) -> Result<&mut Self, KbError> {
        entity.validate().map_err(|reason| KbError::InvalidRecord {
            id: entity.id.to_string(),
            reason,
        })?;
        if self.entities.contains_key(&entity.id) {
            return Err(KbError::DuplicateId(entity.id.to_string()));
        }
        self.entities.insert(entity.id, entity);
        Ok(self)
    }

    pub fn try_add_relation(&mut self, relation: Relation) -> Result<&mut Self, KbError> {
        if relation.label.trim().is_empty() {
            return Err(KbError::InvalidRecord {
                id: relation.id.to_string(),
                reason: "label is empty".into(),
            });
        }
        if self.relations.contains_key(&relation.id) {
            return Err(KbError::DuplicateId(relation.id.to_string()));
        }
        self.relations.insert(relation.id, relation);
        Ok(self)
    }

    /// Panicking convenience for tests and fixtures.
    pub fn entity(mut self, entity: Entity) -> Self {
        self.try_add_entity(entity).expect("valid entity");
        self
    }

    pub fn relation(mut self, relation: Relation) -> Self {
        self.try_add_relation(relation).expect("valid relation");
        self
    }

    pub fn triple(mut self, triple: Triple) -> Self {
        self.triples.push(triple);
        self
    }

    pub fn add_triple(&mut self, triple: Triple) -> &mut Self {
        self.triples.push(triple);
        self
    }

    pub fn build(self) -> Result<TripleStore, KbError> {
        let mut store = TripleStore {
            entities: self.entities,
            relations: self.relations,
            ..TripleStore::default()
        };
        for t in &self.triples {
            if !store.entities.contains_key(&t.subject) {
                return Err(KbError::DanglingReference(t.subject.to_string()));
            }
            if !store.relations.contains_key(&t.predicate) {
                return Err(KbError::DanglingReference(t.predicate.to_string()));
            }
            if let ObjectValue::Entity(o) = &t.object {
                if !store.entities.contains_key(o) {
                    return Err(KbError::DanglingReference(o.to_string()));
                }
            }
        }
        for t in self.triples {
            *store
                .spo
                .entry(t.subject)
                .or_default()
                .entry(t.predicate)
                .or_default()
                .entry(t.object.clone())
                .or_default() += 1;
            *store
                .pos
                .entry(t.predicate)
                .or_default()
                .entry(t.object.clone())
                .or_default()
                .entry(t.subject)
                .or_default() += 1;
            *store
                .osp
                .entry(t.object.clone())
                .or_default()
                .entry(t.subject)
                .or_default()
                .entry(t.predicate)
                .or_default() += 1;
            store.triples.push(t);
        }
        Ok(store)
    }
}

/// Reads a line-delimited JSON file, skipping blank lines.
pub fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, KbError> {
    let io_err = |source| KbError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| KbError::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
