use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::anchors::{filter_anchors, AnchorQA};
use super::generation::{compose, contains_phrase, gen_kb_question, make_aggregate, make_yesno};
use super::linking::{link_bridge, retain_triples, CandidatePair, Direction};
use super::{DatagenError, RejectReason};
use crate::eval::{normalize, BenchmarkRecord, HopGold, HopSource, QType};
use crate::kb::{Triple, TripleStore};
use crate::llm::TextGenerator;
use crate::sparql::{evaluate, parse, Projection, ResultSet, SparqlQuery, Term, TriplePattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Machine,
    Accepted,
    Revised,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopQA {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedQuestion {
    pub id: String,
    pub qtype: QType,
    pub direction: Direction,
    pub composed_text: String,
    pub hop1: HopQA,
    /// The hop-2 question before any yes/no rewrite.
    pub hop2: HopQA,
    /// Bridge mention substituted away by composition.
    pub bridge: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sparql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification_question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifying_answer: Option<String>,
    pub text_passage_id: String,
    pub triple: Triple,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<RejectReason>,
}

impl ComposedQuestion {
    pub fn to_benchmark_record(&self) -> BenchmarkRecord {
        let text_hop = |qa: &HopQA| HopGold {
            sub_question: qa.question.clone(),
            sub_answer: qa.answer.clone(),
            source: HopSource::Text,
            gold_passage_id: Some(self.text_passage_id.clone()),
            gold_triple: None,
            gold_sparql: None,
        };
        let kb_hop = |qa: &HopQA| HopGold {
            sub_question: qa.question.clone(),
            sub_answer: qa.answer.clone(),
            source: HopSource::Kb,
            gold_passage_id: None,
            gold_triple: Some(self.triple.clone()),
            gold_sparql: self.gold_sparql.clone(),
        };
        let hops = match self.direction {
            Direction::TextToKb => vec![text_hop(&self.hop1), kb_hop(&self.hop2)],
            Direction::KbToText => vec![kb_hop(&self.hop1), text_hop(&self.hop2)],
        };
        BenchmarkRecord {
            id: self.id.clone(),
            question: self.composed_text.clone(),
            answers: self.answers.clone(),
            qtype: self.qtype,
            hops,
        }
    }

    /// Checks the emitted-record invariants against the generating store:
    /// no bridge or non-yes/no answer in the question, a single object for
    /// kb-to-text triples, and a gold query that reproduces aggregate counts.
    pub fn check_invariants(&self, store: &TripleStore) -> Result<(), String> {
        if contains_phrase(&self.composed_text, &self.bridge) || contains_phrase(&self.composed_text, &self.hop1.answer) {
            return Err("bridge answer leaks".into());
        }
        let leaked = self
            .answers
            .iter()
            .filter(|a| !matches!(normalize(a).as_str(), "yes" | "no"))
            .find(|a| contains_phrase(&self.composed_text, a));
        if let Some(a) = leaked {
            return Err(format!("final answer {a:?} leaks"));
        }
        let t = &self.triple;
        if self.direction == Direction::KbToText && store.object_count(t.subject, t.predicate) != 1 {
            return Err("kb-to-text triple is not unique".into());
        }
        if self.qtype == QType::AggregateTextKb {
            let q = self
                .gold_sparql
                .as_deref()
                .ok_or("aggregate without gold query")
                .and_then(|s| parse(s).map_err(|_| "aggregate gold query does not parse"))?;
            let count = match evaluate(&q, store) {
                ResultSet::CountValue { value, .. } => value.to_string(),
                _ => return Err("aggregate gold query is not a count".into()),
            };
            if self.answers.first() != Some(&count) {
                return Err(format!("aggregate gold query counts {count}, answers say {:?}", self.answers));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub seed: u64,
    /// Retained pairs used per anchor and direction.
    pub pairs_per_anchor: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pairs_per_anchor: 1,
        }
    }
}

/// A candidate that produced no record, with the stage's reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub anchor_question: String,
    pub direction: Direction,
    pub triple: Triple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatagenOutput {
    pub records: Vec<ComposedQuestion>,
    pub rejections: Vec<Rejection>,
}

fn select_query(t: &Triple) -> String {
    SparqlQuery {
        projection: Projection::SelectVar("object".into()),
        patterns: vec![TriplePattern::new(
            Term::Entity(t.subject),
            Term::Relation(t.predicate),
            Term::var("object"),
        )],
    }
    .to_string()
}

struct Builder<'a> {
    store: &'a TripleStore,
    llm: &'a dyn TextGenerator,
    seed: u64,
}

impl Builder<'_> {
    fn build(&self, pair: &CandidatePair, rng: &mut ChaCha8Rng) -> Result<ComposedQuestion, DatagenError> {
        match pair.direction {
            Direction::TextToKb => self.text_to_kb(pair, rng),
            Direction::KbToText => self.kb_to_text(pair, rng),
        }
    }

    fn base(&self, pair: &CandidatePair, qtype: QType, hop1: HopQA, hop2: HopQA, bridge: String) -> ComposedQuestion {
        ComposedQuestion {
            id: String::new(),
            qtype,
            direction: pair.direction,
            composed_text: String::new(),
            hop1,
            hop2,
            bridge,
            answers: Vec::new(),
            gold_sparql: Some(select_query(&pair.triple)),
            verification_question: None,
            verifying_answer: None,
            text_passage_id: format!("wiki:{}", pair.anchor.title),
            triple: pair.triple.clone(),
            status: Status::Machine,
            rejection: None,
        }
    }

    fn text_to_kb(&self, pair: &CandidatePair, rng: &mut ChaCha8Rng) -> Result<ComposedQuestion, DatagenError> {
        let t = &pair.triple;
        let anchor = &pair.anchor;
        let bridge = self.store.entity_label(t.subject);
        let object = self.store.object_label(&t.object);
        let hop1 = HopQA {
            question: anchor.question.clone(),
            answer: anchor.answer.clone(),
        };
        let mut types = vec![QType::ShortEntityTextKb, QType::YesnoTextKb];
        if self.store.object_count(t.subject, t.predicate) >= 2 {
            types.push(QType::AggregateTextKb);
        }
        let qtype = types[rng.random_range(0..types.len())];
        if qtype == QType::AggregateTextKb {
            let agg = make_aggregate(pair, self.store)?;
            let count = agg.count.to_string();
            let forbidden = [count.clone(), anchor.answer.clone()];
            let composed = compose(&anchor.question, &bridge, &agg.question, &forbidden, self.llm, Some(self.seed))?;
            let mut r = self.base(pair, qtype, hop1, HopQA { question: agg.question, answer: count.clone() }, bridge);
            r.composed_text = composed;
            r.answers = vec![count];
            r.gold_sparql = Some(agg.gold_sparql);
            return Ok(r);
        }
        let kb_question = gen_kb_question(pair, self.store, self.llm, Some(self.seed))?;
        let hop2 = HopQA {
            question: kb_question.clone(),
            answer: object.clone(),
        };
        if qtype == QType::ShortEntityTextKb {
            let forbidden = [object.clone(), anchor.answer.clone()];
            let composed = compose(&anchor.question, &bridge, &kb_question, &forbidden, self.llm, Some(self.seed))?;
            let mut r = self.base(pair, qtype, hop1, hop2, bridge);
            r.composed_text = composed;
            r.answers = vec![object];
            return Ok(r);
        }
        let yn = make_yesno(&kb_question, &object, self.llm, rng, Some(self.seed))?;
        let mut forbidden = vec![anchor.answer.clone()];
        if yn.gold == "no" {
            forbidden.push(object);
        }
        let composed = compose(&anchor.question, &bridge, &yn.question, &forbidden, self.llm, Some(self.seed))?;
        let mut r = self.base(pair, qtype, hop1, hop2, bridge);
        r.composed_text = composed;
        r.answers = vec![yn.gold];
        r.verification_question = Some(yn.question);
        r.verifying_answer = Some(yn.verifying_answer);
        Ok(r)
    }

    fn kb_to_text(&self, pair: &CandidatePair, rng: &mut ChaCha8Rng) -> Result<ComposedQuestion, DatagenError> {
        let t = &pair.triple;
        let anchor = &pair.anchor;
        let object = self.store.object_label(&t.object);
        // the anchor question names the page entity by label or by title
        let bridge = [&object, &anchor.title]
            .into_iter()
            .find(|b| contains_phrase(&anchor.question, b))
            .cloned()
            .ok_or_else(|| DatagenError::BridgeNotMentioned { bridge: object.clone() })?;
        let qtype = if rng.random_bool(0.5) {
            QType::ShortEntityKbText
        } else {
            QType::YesnoKbText
        };
        let kb_question = gen_kb_question(pair, self.store, self.llm, Some(self.seed))?;
        let hop1 = HopQA {
            question: kb_question.clone(),
            answer: object.clone(),
        };
        let hop2 = HopQA {
            question: anchor.question.clone(),
            answer: anchor.answer.clone(),
        };
        if qtype == QType::ShortEntityKbText {
            let forbidden = [anchor.answer.clone(), object];
            let composed = compose(&kb_question, &bridge, &anchor.question, &forbidden, self.llm, Some(self.seed))?;
            let mut r = self.base(pair, qtype, hop1, hop2, bridge);
            r.composed_text = composed;
            r.answers = vec![anchor.answer.clone()];
            return Ok(r);
        }
        let yn = make_yesno(&anchor.question, &anchor.answer, self.llm, rng, Some(self.seed))?;
        if !contains_phrase(&yn.question, &bridge) {
            return Err(DatagenError::BridgeNotMentioned { bridge });
        }
        let mut forbidden = vec![object];
        if yn.gold == "no" {
            forbidden.push(anchor.answer.clone());
        }
        let composed = compose(&kb_question, &bridge, &yn.question, &forbidden, self.llm, Some(self.seed))?;
        let mut r = self.base(pair, qtype, hop1, hop2, bridge);
        r.composed_text = composed;
        r.answers = vec![yn.gold];
        r.verification_question = Some(yn.question);
        r.verifying_answer = Some(yn.verifying_answer);
        Ok(r)
    }
}

/// Runs anchor filtering, linking in both directions, triple retention,
/// question generation and composition. Each anchor draws from its own
/// seeded stream, so output depends only on the inputs and the seed.
pub fn generate(
    anchors: Vec<AnchorQA>,
    store: &TripleStore,
    wiki_pages: &BTreeMap<String, String>,
    llm: &dyn TextGenerator,
    config: &GenerationConfig,
) -> DatagenOutput {
    let mut out = DatagenOutput::default();
    for (i, anchor) in filter_anchors(anchors).into_iter().enumerate() {
        let anchor_seed = config.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(anchor_seed);
        let builder = Builder {
            store,
            llm,
            seed: anchor_seed,
        };
        for direction in [Direction::TextToKb, Direction::KbToText] {
            let pairs = retain_triples(link_bridge(&anchor, store, direction), store, wiki_pages);
            for pair in pairs.into_iter().take(config.pairs_per_anchor) {
                match builder.build(&pair, &mut rng) {
                    Ok(mut record) => {
                        record.id = format!("g{:05}", out.records.len() + 1);
                        out.records.push(record);
                    }
                    Err(e) => {
                        tracing::info!(question = %anchor.question, ?direction, error = %e, "candidate rejected");
                        out.rejections.push(Rejection {
                            anchor_question: anchor.question.clone(),
                            direction,
                            triple: pair.triple.clone(),
                            reason: e.reason(),
                            message: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::kb::{Entity, EntityId, ObjectValue, Relation, RelationId};
    use crate::llm::{Matcher, ScriptEntry, ScriptedProvider};

    pub(crate) fn sample_record() -> ComposedQuestion {
        ComposedQuestion {
            id: "g00001".into(),
            qtype: QType::ShortEntityTextKb,
            direction: Direction::TextToKb,
            composed_text: "Who is the sibling of the actress who starred as Mary Poppins in Mary Poppins Returns?".into(),
            hop1: HopQA {
                question: "Who starred as Mary Poppins in Mary Poppins Returns?".into(),
                answer: "Emily Blunt".into(),
            },
            hop2: HopQA {
                question: "Who is the sibling of Emily Blunt?".into(),
                answer: "Felicity Blunt".into(),
            },
            bridge: "Emily Blunt".into(),
            answers: vec!["Felicity Blunt".into()],
            gold_sparql: Some("SELECT ?object WHERE { wd:Q193482 wdt:P3373 ?object . }".into()),
            verification_question: None,
            verifying_answer: None,
            text_passage_id: "wiki:Mary Poppins Returns".into(),
            triple: Triple::new(
                EntityId::new(193482),
                RelationId::new(3373),
                ObjectValue::Entity(EntityId::new(5442740)),
            ),
            status: Status::Machine,
            rejection: None,
        }
    }

    #[test]
    fn benchmark_record_conversion() {
        let r = sample_record().to_benchmark_record();
        r.validate().unwrap();
        assert_eq!(r.hops[0].source, HopSource::Text);
        assert_eq!(r.hops[1].gold_triple.as_ref().unwrap().subject, EntityId::new(193482));
    }

    #[test]
    fn invariant_checks() {
        let store = TripleStore::builder()
            .entity(Entity::new(EntityId::new(193482), "Emily Blunt"))
            .entity(Entity::new(EntityId::new(5442740), "Felicity Blunt"))
            .relation(Relation::new(RelationId::new(3373), "sibling"))
            .triple(sample_record().triple)
            .build()
            .unwrap();
        sample_record().check_invariants(&store).unwrap();
        let mut leaky = sample_record();
        leaky.composed_text = "Who is the sibling of Emily Blunt?".into();
        assert!(leaky.check_invariants(&store).is_err());
        let mut yes = sample_record();
        yes.qtype = QType::YesnoTextKb;
        yes.answers = vec!["yes".into()];
        yes.composed_text = "Is Felicity Blunt a sibling of the Mary Poppins actress? yes".into();
        yes.check_invariants(&store).unwrap();
    }

    #[test]
    fn end_to_end_generation_is_seeded() {
        let store = TripleStore::builder()
            .entity(Entity::new(EntityId::new(193482), "Emily Blunt"))
            .entity(Entity::new(EntityId::new(5442740), "Felicity Blunt"))
            .relation(Relation::new(RelationId::new(3373), "sibling"))
            .triple(sample_record().triple)
            .build()
            .unwrap();
        let anchor = AnchorQA {
            question: "Who starred as Mary Poppins in Mary Poppins Returns?".into(),
            answer: "Emily Blunt".into(),
            title: "Mary Poppins Returns".into(),
            passage: "Emily Blunt stars as Mary Poppins.".into(),
        };
        let llm = || {
            let entry = |m: &str, r: &str| ScriptEntry {
                label: None,
                matcher: Some(Matcher::One(m.into())),
                digest: None,
                responses: vec![r.into(); 4],
            };
            ScriptedProvider::new(vec![
                entry("Question Entity: Emily Blunt;", "Who is the sibling of Emily Blunt?"),
                entry("Incorrect answer:", "Jonathan Blunt"),
                entry("Candidate answer: Felicity Blunt\n", "Is Felicity Blunt the sibling of Emily Blunt?"),
                entry("Candidate answer: Jonathan Blunt\n", "Is Jonathan Blunt the sibling of Emily Blunt?"),
                entry(
                    "Composed question:",
                    "Who is the sibling of the actress who starred as Mary Poppins in Mary Poppins Returns?",
                ),
            ])
        };
        let config = GenerationConfig { seed: 11, ..Default::default() };
        let a = generate(vec![anchor.clone()], &store, &BTreeMap::new(), &llm(), &config);
        let b = generate(vec![anchor], &store, &BTreeMap::new(), &llm(), &config);
        assert_eq!(a, b);
        assert_eq!(a.records.len() + a.rejections.len(), 1);
        for r in &a.records {
            r.check_invariants(&store).unwrap();
            r.to_benchmark_record().validate().unwrap();
        }
    }
}
