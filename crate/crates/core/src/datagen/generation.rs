use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linking::{CandidatePair, Direction};
use super::{DatagenError, RejectReason};
use crate::eval::normalize;
use crate::kb::TripleStore;
use crate::llm::{generate, GenerationRequest, TextGenerator};
use crate::sparql::{Projection, SparqlQuery, Term, TriplePattern};

/// Extra attempts after a rejected generation.
pub const MAX_REGENERATIONS: usize = 3;

const GENERATION_TEMPERATURE: f64 = 0.7;
const GENERATION_MAX_TOKENS: u32 = 64;

/// Words a verification question may start with.
pub const VERIFICATION_OPENERS: [&str; 6] = ["is", "was", "were", "does", "do", "did"];

const KB_QUESTION_PROMPT: &str = "Instruction: Question generation given the following information:
1) Answer
2) Short relation between the question entity and the answer
3) Question entity.

IMPORTANT: The answer must be avoided in the question.

Answer: Jacques Boigelot;
Relation: director;
Question Entity: Peace in the Fields;
Question: Who directs Peace in the Fields?

Answer: Academy Award for Best Sound Mixing;
Relation: award received;
Question Entity: Douglas Shearer;
Question: Which award does Douglas Shearer receive?

Answer: Rio de Janeiro;
Relation: place of birth;
Question Entity: David Resnick;
Question: Where was David Resnick born?
";

const COMPOSE_PROMPT: &str = "Instruction: Compose 2 single-hop questions into a 2-hop question given:
1) Hop1 question
2) Hop1 answer
3) Hop2 question.

Hop1 question: Who said a rose by any other name would smell just as sweet?
Hop1 answer: Juliet
Hop2 question: What is the cause of death of Juliet?
Composed question: What is the cause of death of the person who said a rose by any other name would smell just as sweet?

Hop1 question: Who hosted The Price Is Right before Bob Barker?
Hop1 answer: Bill Cullen
Hop2 question: What is the medical condition of Bill Cullen?
Composed question: What is the medical condition of the person who hosted The Price Is Right before Bob Barker?

Hop1 question: Who wrote If You Go Away on a Summer's Day?
Hop1 answer: Rod McKuen
Hop2 question: Which record company does Rod McKuen own?
Composed question: Which record company does the person who wrote If You Go Away on a Summer's Day own?
";

const DISTRACTOR_PROMPT: &str = "Instruction: Give one incorrect answer to the question that is closely related to the correct answer. Reply with the incorrect answer only.

Question: What grade were they in High School Musical 1?
Correct answer: juniors
Incorrect answer: seniors

Question: Where was David Resnick born?
Correct answer: Rio de Janeiro
Incorrect answer: Sao Paulo
";

const VERIFICATION_PROMPT: &str = "Instruction: Rewrite the question as a yes/no question that starts with Is, Was, Were, Does, Do or Did and contains the candidate answer.

Question: What grade were they in High School Musical 1?
Candidate answer: seniors
Verification question: Were they seniors in High School Musical 1?

Question: Who is the sibling of Emily Blunt?
Candidate answer: Felicity Blunt
Verification question: Is Felicity Blunt the sibling of Emily Blunt?
";

/// Whether `needle` occurs in `haystack` as a whole-word phrase after metric
/// normalization. An empty needle never occurs.
pub fn contains_phrase(haystack: &str, needle: &str) -> bool {
    let needle = normalize(needle);
    !needle.is_empty() && format!(" {} ", normalize(haystack)).contains(&format!(" {needle} "))
}

fn is_yes_no(answer: &str) -> bool {
    matches!(normalize(answer).as_str(), "yes" | "no")
}

/// First non-empty line of a completion with any echoed field label removed.
fn first_line(completion: &str, label: &str) -> String {
    let line = completion.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let stripped = line
        .get(..label.len())
        .filter(|head| head.eq_ignore_ascii_case(label))
        .map_or(line, |_| &line[label.len()..]);
    stripped.trim().trim_end_matches(';').trim().to_string()
}

fn sample_once(llm: &dyn TextGenerator, prompt: String, seed: Option<u64>) -> Result<String, DatagenError> {
    let request = GenerationRequest::new(prompt, GENERATION_TEMPERATURE, 1)
        .with_max_tokens(GENERATION_MAX_TOKENS)
        .with_seed(seed);
    Ok(generate(&request, llm)?.samples.into_iter().next().unwrap_or_default())
}

fn attempt_seed(seed: Option<u64>, attempt: usize) -> Option<u64> {
    seed.map(|s| s.wrapping_add(attempt as u64))
}

/// Asks for a single-hop question about the pair's triple whose answer is
/// the triple object; outputs naming the object are regenerated.
pub fn gen_kb_question(
    pair: &CandidatePair,
    store: &TripleStore,
    llm: &dyn TextGenerator,
    seed: Option<u64>,
) -> Result<String, DatagenError> {
    let t = &pair.triple;
    let answer = store.object_label(&t.object);
    let prompt = format!(
        "{KB_QUESTION_PROMPT}\nAnswer: {answer};\nRelation: {};\nQuestion Entity: {};\nQuestion:",
        store.relation_label(t.predicate),
        store.entity_label(t.subject)
    );
    let attempts = 1 + MAX_REGENERATIONS;
    for attempt in 0..attempts {
        let question = first_line(&sample_once(llm, prompt.clone(), attempt_seed(seed, attempt))?, "Question:");
        if question.is_empty() || contains_phrase(&question, &answer) {
            tracing::debug!(%question, attempt, "kb question rejected");
            continue;
        }
        return Ok(question);
    }
    tracing::warn!(triple = ?t, "kb question discarded: answer leak");
    Err(DatagenError::GenerationLeak { leaked: answer, attempts })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YesNoQuestion {
    pub question: String,
    /// Candidate answer embedded in the question.
    pub verifying_answer: String,
    /// "yes" when the candidate is the true answer, else "no".
    pub gold: String,
}

/// Turns a question into a verification question. A fair coin decides
/// whether the embedded candidate is the true answer or a sampled
/// distractor.
pub fn make_yesno<R: Rng>(
    question: &str,
    answer: &str,
    llm: &dyn TextGenerator,
    rng: &mut R,
    seed: Option<u64>,
) -> Result<YesNoQuestion, DatagenError> {
    let truthful = rng.random_bool(0.5);
    let verifying_answer = if truthful {
        answer.to_string()
    } else {
        let prompt = format!("{DISTRACTOR_PROMPT}\nQuestion: {question}\nCorrect answer: {answer}\nIncorrect answer:");
        let mut found = None;
        for attempt in 0..=MAX_REGENERATIONS {
            let d = first_line(&sample_once(llm, prompt.clone(), attempt_seed(seed, attempt))?, "Incorrect answer:");
            if !normalize(&d).is_empty() && normalize(&d) != normalize(answer) && !contains_phrase(&d, answer) {
                found = Some(d);
                break;
            }
        }
        found.ok_or_else(|| DatagenError::DistractorEqualsAnswer {
            answer: answer.to_string(),
        })?
    };
    let prompt = format!(
        "{VERIFICATION_PROMPT}\nQuestion: {question}\nCandidate answer: {verifying_answer}\nVerification question:"
    );
    let attempts = 1 + MAX_REGENERATIONS;
    for attempt in 0..attempts {
        let q = first_line(
            &sample_once(llm, prompt.clone(), attempt_seed(seed, attempt + attempts))?,
            "Verification question:",
        );
        let opener = q.split_whitespace().next().unwrap_or("").to_lowercase();
        let well_formed = VERIFICATION_OPENERS.contains(&opener.as_str())
            && contains_phrase(&q, &verifying_answer)
            && (truthful || !contains_phrase(&q, answer));
        if well_formed {
            return Ok(YesNoQuestion {
                question: q,
                verifying_answer,
                gold: if truthful { "yes" } else { "no" }.to_string(),
            });
        }
        tracing::debug!(question = %q, attempt, "verification question rejected");
    }
    Err(DatagenError::VerificationFormat { attempts })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateQuestion {
    pub question: String,
    pub count: usize,
    pub gold_sparql: String,
}

fn counted_noun(pair: &CandidatePair, store: &TripleStore) -> String {
    let relation = store.relation(pair.triple.predicate);
    let single_word = relation
        .into_iter()
        .flat_map(|r| std::iter::once(&r.label).chain(&r.aliases))
        .find(|w| !w.trim().is_empty() && !w.contains(' '));
    match single_word {
        Some(w) if w.ends_with('s') => w.to_lowercase(),
        Some(w) => format!("{}s", w.to_lowercase()),
        None => format!("{} values", store.relation_label(pair.triple.predicate)),
    }
}

/// Counting question over the pair's (subject, relation), answered by the
/// number of stored objects.
pub fn make_aggregate(pair: &CandidatePair, store: &TripleStore) -> Result<AggregateQuestion, DatagenError> {
    let t = &pair.triple;
    let count = store.object_count(t.subject, t.predicate);
    if pair.direction != Direction::TextToKb || count < 2 {
        return Err(DatagenError::AggregatePrecondition { count });
    }
    let query = SparqlQuery {
        projection: Projection::Count {
            variable: "object".into(),
            alias: "count".into(),
        },
        patterns: vec![TriplePattern::new(
            Term::Entity(t.subject),
            Term::Relation(t.predicate),
            Term::var("object"),
        )],
    };
    Ok(AggregateQuestion {
        question: format!("How many {} does {} have?", counted_noun(pair, store), store.entity_label(t.subject)),
        count,
        gold_sparql: query.to_string(),
    })
}

/// Chains two single-hop questions by replacing the bridge mention in the
/// hop-2 question. Outputs that name the bridge or a forbidden answer are
/// regenerated; yes/no answers are never forbidden.
pub fn compose(
    hop1_question: &str,
    bridge: &str,
    hop2_question: &str,
    forbidden: &[String],
    llm: &dyn TextGenerator,
    seed: Option<u64>,
) -> Result<String, DatagenError> {
    if normalize(hop1_question) == normalize(hop2_question) {
        return Err(DatagenError::CircularQuestion);
    }
    if !contains_phrase(hop2_question, bridge) {
        return Err(DatagenError::BridgeNotMentioned {
            bridge: bridge.to_string(),
        });
    }
    let forbidden: Vec<&String> = forbidden.iter().filter(|a| !is_yes_no(a)).collect();
    let prompt = format!(
        "{COMPOSE_PROMPT}\nHop1 question: {hop1_question}\nHop1 answer: {bridge}\nHop2 question: {hop2_question}\nComposed question:"
    );
    let attempts = 1 + MAX_REGENERATIONS;
    let mut reason = RejectReason::Other;
    for attempt in 0..attempts {
        let composed = first_line(&sample_once(llm, prompt.clone(), attempt_seed(seed, attempt))?, "Composed question:");
        reason = if composed.is_empty() {
            RejectReason::Other
        } else if normalize(&composed) == normalize(hop1_question) {
            RejectReason::Circular
        } else if contains_phrase(&composed, bridge) {
            RejectReason::BridgeLeak
        } else if forbidden.iter().any(|a| contains_phrase(&composed, a)) {
            RejectReason::AnswerLeak
        } else {
            return Ok(composed);
        };
        tracing::debug!(%composed, ?reason, attempt, "composition rejected");
    }
    Err(DatagenError::CompositionLeak { reason, attempts })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::kb::{Entity, EntityId, ObjectValue, Relation, RelationId, Triple};
    use crate::llm::{Matcher, ScriptEntry, ScriptedProvider};
    use crate::sparql::{answer_labels, evaluate, parse};

    fn scripted(entries: &[(&str, &[&str])]) -> ScriptedProvider {
        ScriptedProvider::new(
            entries
                .iter()
                .map(|(m, responses)| ScriptEntry {
                    label: None,
                    matcher: Some(Matcher::One(m.to_string())),
                    digest: None,
                    responses: responses.iter().map(|r| r.to_string()).collect(),
                })
                .collect(),
        )
    }

    fn store() -> TripleStore {
        let award = |n| Triple::new(EntityId::new(1), RelationId::new(166), ObjectValue::Entity(EntityId::new(n)));
        let mut b = TripleStore::builder()
            .entity(Entity::new(EntityId::new(1), "Milton Friedman"))
            .entity(Entity::new(EntityId::new(2), "Emily Blunt"))
            .entity(Entity::new(EntityId::new(3), "Felicity Blunt"))
            .relation(Relation::new(RelationId::new(166), "award received").with_aliases(["award", "prize"]))
            .relation(Relation::new(RelationId::new(3373), "sibling"))
            .triple(Triple::new(EntityId::new(2), RelationId::new(3373), ObjectValue::Entity(EntityId::new(3))));
        for n in 10..20 {
            b = b.entity(Entity::new(EntityId::new(n), format!("Award {n}"))).triple(award(n));
        }
        b.build().unwrap()
    }

    fn pair(s: u64, p: u64, o: u64, direction: Direction) -> CandidatePair {
        CandidatePair {
            anchor: super::super::AnchorQA {
                question: "q".into(),
                answer: "a".into(),
                title: "t".into(),
                passage: "p".into(),
            },
            direction,
            bridge_entity: EntityId::new(s),
            triple: Triple::new(EntityId::new(s), RelationId::new(p), ObjectValue::Entity(EntityId::new(o))),
        }
    }

    #[test]
    fn phrase_matching_is_word_bounded() {
        assert!(contains_phrase("Who is the sibling of Emily Blunt?", "emily  BLUNT"));
        assert!(!contains_phrase("Who won in 2015?", "5"));
        assert!(!contains_phrase("anything", "the"));
    }

    #[test]
    fn kb_question_regenerates_on_leak() {
        let s = store();
        let llm = scripted(&[(
            "Question Entity: Emily Blunt;",
            &[" Is Felicity Blunt the sibling of Emily Blunt?", " Who is the sibling of Emily Blunt?"],
        )]);
        let q = gen_kb_question(&pair(2, 3373, 3, Direction::TextToKb), &s, &llm, None).unwrap();
        assert_eq!(q, "Who is the sibling of Emily Blunt?");

        let leaky = scripted(&[("Question Entity: Emily Blunt;", &["Felicity Blunt?"; 4])]);
        let err = gen_kb_question(&pair(2, 3373, 3, Direction::TextToKb), &s, &leaky, None).unwrap_err();
        assert!(matches!(err, DatagenError::GenerationLeak { attempts: 4, .. }));
    }

    #[test]
    fn yesno_branches() {
        let llm = scripted(&[
            ("Correct answer: juniors\nIncorrect answer:", &["juniors", "seniors"]),
            ("Candidate answer: seniors\n", &["Were they seniors in High School Musical 1?"]),
            ("Candidate answer: juniors\n", &["Were they juniors in High School Musical 1?"]),
        ]);
        let mut golds = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        while golds.len() < 2 {
            let y = make_yesno("What grade were they in High School Musical 1?", "juniors", &llm, &mut rng, None)
                .unwrap();
            match y.gold.as_str() {
                "no" if !golds.contains(&"no") => {
                    assert_eq!(y.question, "Were they seniors in High School Musical 1?");
                    assert_eq!(y.verifying_answer, "seniors");
                    golds.push("no");
                }
                "yes" if !golds.contains(&"yes") => {
                    assert_eq!(y.verifying_answer, "juniors");
                    golds.push("yes");
                }
                _ => break,
            }
        }
        assert_eq!(golds.len(), 2);
    }

    #[test]
    fn distractor_equal_to_answer_exhausts() {
        let llm = scripted(&[("Incorrect answer:", &["Juniors."; 8])]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // truthful flips fail on the unscripted verification prompt instead
        let exhausted = (0..16)
            .map(|_| make_yesno("What grade?", "juniors", &llm, &mut rng, None))
            .any(|r| matches!(r, Err(DatagenError::DistractorEqualsAnswer { .. })));
        assert!(exhausted);
    }

    #[test]
    fn aggregate_counts_and_round_trips() {
        let s = store();
        let a = make_aggregate(&pair(1, 166, 10, Direction::TextToKb), &s).unwrap();
        assert_eq!(a.question, "How many awards does Milton Friedman have?");
        assert_eq!(a.count, 10);
        let q = parse(&a.gold_sparql).unwrap();
        assert_eq!(answer_labels(&evaluate(&q, &s), &q, &s), ["10"]);
        let single = make_aggregate(&pair(2, 3373, 3, Direction::TextToKb), &s);
        assert!(matches!(single, Err(DatagenError::AggregatePrecondition { count: 1 })));
        let wrong_direction = make_aggregate(&pair(1, 166, 10, Direction::KbToText), &s);
        assert!(wrong_direction.is_err());
    }

    #[test]
    fn compose_validates() {
        let hop1 = "Who said a rose by any other name would smell just as sweet?";
        let hop2 = "What is the cause of death of Juliet?";
        let good = "What is the cause of death of the person who said a rose by any other name would smell just as sweet?";
        let llm = scripted(&[("Hop2 question: What is the cause", &["What is the cause of death of Juliet, who said it?", good])]);
        assert_eq!(compose(hop1, "Juliet", hop2, &["suicide".into()], &llm, None).unwrap(), good);

        let leaky = scripted(&[("Composed question:", &["How did Juliet die?"; 4])]);
        let err = compose(hop1, "Juliet", hop2, &[], &leaky, None).unwrap_err();
        assert!(matches!(err, DatagenError::CompositionLeak { reason: RejectReason::BridgeLeak, .. }));

        let answer_leak = scripted(&[("Composed question:", &["Did the speaker of the rose line die by suicide?"; 4])]);
        let err = compose(hop1, "Juliet", hop2, &["suicide".into(), "yes".into()], &answer_leak, None).unwrap_err();
        assert_eq!(err.reason(), Some(RejectReason::AnswerLeak));

        assert!(matches!(compose(hop2, "Juliet", hop2, &[], &llm, None), Err(DatagenError::CircularQuestion)));
        assert!(matches!(
            compose(hop1, "Romeo", hop2, &[], &llm, None),
            Err(DatagenError::BridgeNotMentioned { .. })
        ));
    }
}
