use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::anchors::AnchorQA;
use crate::kb::{EntityId, ObjectValue, Triple, TripleStore};
use crate::linker::EntityLinker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// The anchor answer is the subject of the triple.
    TextToKb,
    /// The anchor page entity is the object of the triple.
    KbToText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub anchor: AnchorQA,
    pub direction: Direction,
    pub bridge_entity: EntityId,
    pub triple: Triple,
}

fn link_title(title: &str, store: &TripleStore) -> Option<EntityId> {
    if let Some(e) = store.entities_with_title(title).first() {
        return Some(e.id);
    }
    EntityLinker::new(store).link(title, title, None).chosen
}

/// Candidate pairs for one anchor. Text-to-kb links the answer and takes its
/// outgoing triples; kb-to-text links the page title and takes its incoming
/// triples.
pub fn link_bridge(anchor: &AnchorQA, store: &TripleStore, direction: Direction) -> Vec<CandidatePair> {
    let (bridge, triples) = match direction {
        Direction::TextToKb => {
            let Some(id) = EntityLinker::new(store).link(&anchor.answer, &anchor.question, None).chosen else {
                return Vec::new();
            };
            (id, store.lookup(Some(id), None, None))
        }
        Direction::KbToText => {
            let Some(id) = link_title(&anchor.title, store) else {
                return Vec::new();
            };
            (id, store.lookup(None, None, Some(&ObjectValue::Entity(id))))
        }
    };
    let mut triples = triples.unwrap_or_default();
    triples.dedup();
    triples
        .into_iter()
        .map(|triple| CandidatePair {
            anchor: anchor.clone(),
            direction,
            bridge_entity: bridge,
            triple,
        })
        .collect()
}

/// Drops pairs whose object is readable from the subject's page, and
/// kb-to-text pairs whose (subject, relation) has more than one object.
pub fn retain_triples(
    pairs: Vec<CandidatePair>,
    store: &TripleStore,
    wiki_pages: &BTreeMap<String, String>,
) -> Vec<CandidatePair> {
    let folded_pages: BTreeMap<String, String> =
        wiki_pages.iter().map(|(t, p)| (t.to_lowercase(), p.to_lowercase())).collect();
    pairs
        .into_iter()
        .filter(|pair| {
            let t = &pair.triple;
            let page = store
                .entity(t.subject)
                .and_then(|e| e.wikipedia_title.as_deref())
                .and_then(|title| folded_pages.get(&title.to_lowercase()));
            let hidden = match page {
                None => true,
                Some(text) => !text.contains(&store.object_label(&t.object).to_lowercase()),
            };
            let unique = pair.direction == Direction::TextToKb || store.object_count(t.subject, t.predicate) == 1;
            hidden && unique
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{Entity, Relation, RelationId};

    fn q(n: u64) -> EntityId {
        EntityId::new(n)
    }

    fn store() -> TripleStore {
        let e = |n, label: &str| Entity::new(q(n), label);
        let triple = |s, p, o| Triple::new(q(s), RelationId::new(p), ObjectValue::Entity(q(o)));
        TripleStore::builder()
            .entity(e(1, "Emily Blunt").with_wikipedia_title("Emily Blunt"))
            .entity(e(2, "Felicity Blunt"))
            .entity(e(3, "Mary Poppins Returns").with_wikipedia_title("Mary Poppins Returns"))
            .entity(e(4, "William Weatherall Wilkins"))
            .entity(e(5, "Lin-Manuel Miranda"))
            .entity(e(6, "Hamilton"))
            .entity(e(7, "British actress"))
            .relation(Relation::new(RelationId::new(3373), "sibling"))
            .relation(Relation::new(RelationId::new(1441), "present in work"))
            .relation(Relation::new(RelationId::new(800), "notable work"))
            .relation(Relation::new(RelationId::new(106), "occupation"))
            .triple(triple(1, 3373, 2))
            .triple(triple(1, 106, 7))
            .triple(triple(4, 1441, 3))
            .triple(triple(5, 800, 3))
            .triple(triple(5, 800, 6))
            .build()
            .unwrap()
    }

    fn anchor() -> AnchorQA {
        AnchorQA {
            question: "Who starred as Mary Poppins in Mary Poppins Returns?".into(),
            answer: "Emily Blunt".into(),
            title: "Mary Poppins Returns".into(),
            passage: "Emily Blunt stars as Mary Poppins.".into(),
        }
    }

    #[test]
    fn text_to_kb_uses_answer_as_subject() {
        let s = store();
        let pairs = link_bridge(&anchor(), &s, Direction::TextToKb);
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().all(|p| p.bridge_entity == q(1) && p.triple.subject == q(1)));
        assert!(pairs.iter().any(|p| p.triple.object == ObjectValue::Entity(q(2))));
    }

    #[test]
    fn kb_to_text_uses_title_as_object() {
        let s = store();
        let pairs = link_bridge(&anchor(), &s, Direction::KbToText);
        let subjects: Vec<EntityId> = pairs.iter().map(|p| p.triple.subject).collect();
        assert_eq!(subjects, [q(4), q(5)]);
        assert!(pairs.iter().all(|p| p.triple.object == ObjectValue::Entity(q(3))));
    }

    #[test]
    fn unlinkable_answer_gives_nothing() {
        let mut a = anchor();
        a.answer = "Zzyzx".into();
        assert!(link_bridge(&a, &store(), Direction::TextToKb).is_empty());
    }

    #[test]
    fn retention_filters() {
        let s = store();
        let pages = BTreeMap::from([("Emily Blunt".to_string(), "Emily Blunt is a British actress.".to_string())]);
        let kept = retain_triples(link_bridge(&anchor(), &s, Direction::TextToKb), &s, &pages);
        // the occupation object appears on the subject's page
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].triple.object, ObjectValue::Entity(q(2)));
        // subjects without a page are kept unless the relation is multi-valued
        let kept = retain_triples(link_bridge(&anchor(), &s, Direction::KbToText), &s, &pages);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].triple.subject, q(4));
    }
}
