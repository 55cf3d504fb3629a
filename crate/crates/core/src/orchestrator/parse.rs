use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::OrchestratorError;

static LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?mi)^[ \t]*(rationale|search query|query entity|sparql|answer)[ \t]*:").expect("label regex")
});

static TRAILER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(Example \d+|Target( Question)?)[ \t]*$").expect("trailer regex"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopFields {
    pub rationale: Option<String>,
    pub search_query: String,
    pub query_entity: Option<String>,
    pub sparql: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalFields {
    pub rationale: Option<String>,
    pub answer: String,
}

/// Last value of each label, with the text before the first label treated as
/// a continuation of the prompt's trailing `Rationale:`.
fn fields(completion: &str) -> (Option<String>, Vec<(String, String)>) {
    let text = match TRAILER.find(completion) {
        Some(m) => &completion[..m.start()],
        None => completion,
    };
    let marks: Vec<(usize, usize, String)> = LABEL
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).expect("match");
            (whole.start(), whole.end(), c[1].to_lowercase())
        })
        .collect();
    let lead_end = marks.first().map_or(text.len(), |m| m.0);
    let lead = clean(&text[..lead_end]);
    let mut out = Vec::new();
    for (i, (_, value_start, label)) in marks.iter().enumerate() {
        let value_end = marks.get(i + 1).map_or(text.len(), |m| m.0);
        out.push((label.clone(), text[*value_start..value_end].trim().to_string()));
    }
    (lead, out)
}

fn clean(value: &str) -> Option<String> {
    let v = value.split_whitespace().collect::<Vec<_>>().join(" ");
    if v.is_empty() || v.eq_ignore_ascii_case("none") {
        None
    } else {
        Some(v)
    }
}

fn last(fields: &[(String, String)], label: &str) -> Option<String> {
    fields.iter().rev().find(|(l, _)| l == label).and_then(|(_, v)| clean(v))
}

pub fn parse_llm_fields(completion: &str) -> Result<HopFields, OrchestratorError> {
    let (lead, fields) = fields(completion);
    Ok(HopFields {
        rationale: last(&fields, "rationale").or(lead),
        search_query: last(&fields, "search query").ok_or(OrchestratorError::MissingField("search_query"))?,
        query_entity: last(&fields, "query entity"),
        sparql: last(&fields, "sparql"),
    })
}

pub fn parse_final(completion: &str) -> Result<FinalFields, OrchestratorError> {
    let (lead, fields) = fields(completion);
    Ok(FinalFields {
        rationale: last(&fields, "rationale").or(lead),
        answer: last(&fields, "answer").ok_or(OrchestratorError::MissingField("answer"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_hop_target_completion() {
        let c = " Let's think step by step. Based on the context, we have learned the following. Decompose the question to answer the following single-hop questions. 1. who is the 26th president of the United States? 2. How many organizations is this person a member of?\nSearch Query: 26th president of the United States\nQuery Entity: None\nSPARQL: None";
        let f = parse_llm_fields(c).unwrap();
        assert_eq!(f.search_query, "26th president of the United States");
        assert_eq!(f.query_entity, None);
        assert_eq!(f.sparql, None);
        assert!(f.rationale.unwrap().starts_with("Let's think step by step."));
    }

    #[test]
    fn second_hop_target_completion() {
        let c = "Rationale: Let's think step by step. Based on the context, we have learned the following. The 26th president of the United States is Theodore Roosevelt. The second step is to answer how many organizations he is a member of.\nSearch Query: How many organizations is Theodore Roosevelt a member of?\nQuery Entity: Theodore Roosevelt\nSPARQL : SELECT (COUNT(?organization) as ?count) WHERE { wd:Q33866 wdt:P463 ?organization. }\n";
        let f = parse_llm_fields(c).unwrap();
        assert_eq!(f.query_entity.as_deref(), Some("Theodore Roosevelt"));
        assert_eq!(
            f.sparql.as_deref(),
            Some("SELECT (COUNT(?organization) as ?count) WHERE { wd:Q33866 wdt:P463 ?organization. }")
        );
    }

    #[test]
    fn missing_search_query() {
        assert!(matches!(
            parse_llm_fields("Rationale: thinking\nQuery Entity: X"),
            Err(OrchestratorError::MissingField("search_query"))
        ));
    }

    #[test]
    fn trailing_demonstrations_and_last_occurrence() {
        let c = "x\nSearch Query: first\nSearch Query: second\nQuery Entity: E\n\nExample 4\nContext:\nQuestion: other\nSearch Query: leaked\n";
        let f = parse_llm_fields(c).unwrap();
        assert_eq!(f.search_query, "second");
        assert_eq!(f.query_entity.as_deref(), Some("E"));
    }

    #[test]
    fn multiline_sparql_is_joined() {
        let f = parse_llm_fields("Search Query: q\nSPARQL: SELECT ?x WHERE {\n  wd:Q1 wdt:P2 ?x .\n}").unwrap();
        assert_eq!(f.sparql.as_deref(), Some("SELECT ?x WHERE { wd:Q1 wdt:P2 ?x . }"));
    }

    #[test]
    fn final_answer() {
        let f = parse_final(" The 26th president of the United States was Theodore Roosevelt. He is a member of 5 organizations.\nAnswer: 5").unwrap();
        assert_eq!(f.answer, "5");
        assert!(f.rationale.unwrap().contains("5 organizations"));
        assert!(matches!(parse_final("no label"), Err(OrchestratorError::MissingField("answer"))));
    }
}
