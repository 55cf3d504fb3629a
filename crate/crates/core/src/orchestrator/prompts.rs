//! Few-shot prompt templates for the hop and final-answer stages.

use crate::rerank::RankedContext;

const HOP_INSTRUCTION: &str = "Write a search query, query entity, and SPARQL that will help answer a complex question.\nFollow the following format.\n";

const HOP_FORMAT_TAIL: &str = "Question: ${the question to be answered}
Rationale: Let's think step by step. Based on the context, we have learned the following. ${information from the context that provides useful clues}
Search Query: ${a simple question for seeking the missing information}
Query Entity: ${query entity name from search query}
SPARQL: ${SPARQL query used to query against Wikidata}
";

const FIRST_HOP_DEMOS: &str = "Example 1
Context:
Question: What are the occupations of the person who holds the most women's Wimbledon titles?
Rationale: Let's think step by step. Based on the context, we have learned the following. Decompose the question to answer the following single-hop questions. 1. Who holds the most women's Wimbledon titles? 2. What are the occupations of this person
Search Query: Who holds the most women's Wimbledon titles?
Query Entity: women's Wimbledon titles
SPARQL: None

Example 2
Context:
Question: Which bay is the name of David Resnick's place of birth?
Rationale: Let's think step by step. Based on the context, we have learned the following. Decompose the question to answer the following single-hop questions. 1. Where was David Resnick born? 2. Which bay is the name of this place
Search Query: Where was David Resnick born?
Query Entity: David Resnick
SPARQL: SELECT ?place WHERE {wd:Q962183 wdt:P19 ?place.}

Example 3
Context:
Question: Is the person who directed the film The Shape of Water a member of the Writers Guild of America, West?
Rationale: Let's think step by step. Based on the context, we have learned the following. Decompose the question to answer the following single-hop questions. 1. Who directed the film the shape of water? 2. Is the person the person a member of the Writers Guild of America, West?
Search Query: The director of the film The Shape of Water
Query Entity: The Shape of Water
SPARQL: SELECT ?name WHERE {wd:Q26698156 wdt:P57 ?name.}
";

const LATER_HOP_DEMOS: &str = "Example 1
Context:[[1] ... [k]]
Question: What are the occupations of the person who holds the most women's Wimbledon titles?
Rationale: Let's think step by step. Based on the context, we have learned the following. Wimbledon is a tennis tournament, and tennis player Martina Navratilova holds the most women's Wimbledon titles. The second step is to answer what are the occupations of this person.
Search Query: What are the occupations of Martina Navratilova?
Query Entity: Martina Navratilova
SPARQL: SELECT ?name WHERE {wd:Q54545 wdt:P106 ?name.}

Example 2
Context:[[1] ... [k]]
Question: Which bay is the name of David Resnick's place of birth?
Rationale: Let's think step by step. Based on the context, we have learned the following. David Resnick was born in Rio de Janeiro. The second step is to answer which bay is the name of Rio de Janeiro?
Search Query: which bay is the name of Rio de Janeiro?
Query Entity: Rio de Janeiro
SPARQL: None

Example 3
Context:[[1] ... [k]]
Question: Is the person who directed the film The Shape of Water a member of the Writers Guild of America, West?
Rationale: Let's think step by step. Based on the context, we have learned the following. The Shape of Water is directed by Guillermo del Toro. The second step is to answer is the person a member of the Writers Guild of America, West
Search Query: the organization Guillermo del Toro is in
Query Entity: Guillermo del Toro
SPARQL: SELECT ?name WHERE {wd:Q219124 wdt:P463 ?name.}
";

const FINAL_HEADER: &str = "Answer questions with short factoid answers.
Follow the following format.
Context:${sources that may contain relevant content}
Question: ${the question to be answered}
Rationale: Let's think step by step. ${a step-by-step deduction that identifies the correct response, which will be provided below}
Answer: ${a short factoid answer, often between 1 and 5 words}
";

const FINAL_DEMOS: &str = "Example 1
Context: [[1] ... [k]]
Question: What are the occupations of the person who holds the most women's Wimbledon titles?
Rationale: Let's think step by step. Martina Navratilova is a tennis player, writer, novelist, and autobiographer.
Answer: tennis player, writer, novelist, and autobiographer

Example 2
Context: [[1] ... [k]]
Question: Which bay is the name of David Resnick's place of birth?
Rationale: Let's think step by step. David Resnick was born in Rio de Janeiro, and \"Rio de Janeiro\" was the name of Guanabara Bay.
Answer: Guanabara Bay

Example 3
Context:[[1] ... [k]]
Question: Is the person who directed the film The Shape of Water a member of the Writers Guild of America, West?
Rationale: Let's think step by step. Guillermo del Toro Gomez is a filmmaker, he is a member of the Writers Guild of America, West.
Answer: yes
";

fn single_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `[[1] first [2] second ...]`, numbered across all contexts in order; empty
/// when there is no evidence.
pub fn render_context(contexts: &[RankedContext]) -> String {
    let entries: Vec<String> = contexts
        .iter()
        .flat_map(|c| &c.items)
        .enumerate()
        .map(|(i, item)| format!("[{}] {}", i + 1, single_line(&item.text)))
        .collect();
    if entries.is_empty() {
        String::new()
    } else {
        format!("[{}]", entries.join(" "))
    }
}

/// Prompt for hop `hop` (1-based), given the contexts of earlier hops.
pub fn render_hop(hop: usize, question: &str, contexts: &[RankedContext]) -> String {
    let (context_format, demos) = if hop <= 1 {
        ("Context: ${sources that may contain relevant content}\n", FIRST_HOP_DEMOS)
    } else {
        ("Context:${sources that may contain relevant content}\n", LATER_HOP_DEMOS)
    };
    format!(
        "{HOP_INSTRUCTION}{context_format}{HOP_FORMAT_TAIL}\n{demos}\nTarget Question\nContext:{}\nQuestion: {}\nRationale:",
        render_context(contexts),
        single_line(question)
    )
}

pub fn render_final(question: &str, contexts: &[RankedContext]) -> String {
    format!(
        "{FINAL_HEADER}\n{FINAL_DEMOS}\nTarget\nContext:{}\nQuestion: {}\nRationale:",
        render_context(contexts),
        single_line(question)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rerank::{EvidenceCandidate, EvidenceSource};

    fn ctx(texts: &[&str]) -> RankedContext {
        RankedContext {
            question: "q".into(),
            scorer: "lexical".into(),
            items: texts
                .iter()
                .map(|t| EvidenceCandidate {
                    key: t.to_string(),
                    text: t.to_string(),
                    source: EvidenceSource::DenseText,
                    originating_query: "q".into(),
                    provenance: None,
                    invocation: None,
                    relevance: Some(0.0),
                })
                .collect(),
        }
    }

    #[test]
    fn first_hop_has_empty_context() {
        let p = render_hop(1, "Where?", &[]);
        assert!(p.ends_with("Target Question\nContext:\nQuestion: Where?\nRationale:"));
        assert!(p.starts_with("Write a search query"));
        assert_eq!(p.matches("\nExample ").count(), 3);
    }

    #[test]
    fn final_numbers_entries_across_hops() {
        let p = render_final("Q?", &[ctx(&["a", "b", "c"]), ctx(&["d", "e", "f"])]);
        assert!(p.contains("Context:[[1] a [2] b [3] c [4] d [5] e [6] f]\nQuestion: Q?\nRationale:"));
        let target = p.rsplit("Target\n").next().unwrap();
        assert_eq!((1..=6).filter(|i| target.contains(&format!("[{i}] "))).count(), 6);
    }

    #[test]
    fn evidence_newlines_are_flattened() {
        let p = render_hop(2, "Q?", &[ctx(&["line one\nline two"])]);
        assert!(p.contains("Context:[[1] line one line two]\nQuestion: Q?"));
    }

    #[test]
    fn rendering_is_stable() {
        let c = [ctx(&["x"])];
        assert_eq!(render_hop(2, "Q", &c), render_hop(2, "Q", &c));
        assert_ne!(render_hop(1, "Q", &[]), render_hop(2, "Q", &[]));
    }
}
