use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::kb::Triple;
use crate::sparql::{parse, Projection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QType {
    ShortEntityTextKb,
    ShortEntityKbText,
    YesnoTextKb,
    YesnoKbText,
    AggregateTextKb,
}

impl QType {
    pub const ALL: [QType; 5] = [
        QType::ShortEntityTextKb,
        QType::ShortEntityKbText,
        QType::YesnoTextKb,
        QType::YesnoKbText,
        QType::AggregateTextKb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QType::ShortEntityTextKb => "short_entity_text_kb",
            QType::ShortEntityKbText => "short_entity_kb_text",
            QType::YesnoTextKb => "yesno_text_kb",
            QType::YesnoKbText => "yesno_kb_text",
            QType::AggregateTextKb => "aggregate_text_kb",
        }
    }

    /// Source of the first hop.
    pub fn first_source(self) -> HopSource {
        match self {
            QType::ShortEntityKbText | QType::YesnoKbText => HopSource::Kb,
            _ => HopSource::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopSource {
    Text,
    Kb,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopGold {
    pub sub_question: String,
    pub sub_answer: String,
    pub source: HopSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_passage_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_triple: Option<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sparql: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub qtype: QType,
    pub hops: Vec<HopGold>,
}

impl BenchmarkRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |reason: String| EvalError::InvalidRecord {
            id: self.id.clone(),
            reason,
        };
        if self.answers.is_empty() || self.answers.iter().all(|a| a.trim().is_empty()) {
            return Err(bad("no gold answers".into()));
        }
        if self.hops.len() != 2 {
            return Err(bad(format!("expected 2 hops, found {}", self.hops.len())));
        }
        for (i, hop) in self.hops.iter().enumerate() {
            match hop.source {
                HopSource::Text if hop.gold_passage_id.is_none() => {
                    return Err(bad(format!("text hop {} has no gold passage", i + 1)))
                }
                HopSource::Kb if hop.gold_triple.is_none() => {
                    return Err(bad(format!("kb hop {} has no gold triple", i + 1)))
                }
                _ => {}
            }
            if let Some(text) = &hop.gold_sparql {
                parse(text).map_err(|e| bad(format!("hop {} sparql: {e}", i + 1)))?;
            }
        }
        if self.qtype == QType::AggregateTextKb {
            let has_count = self.hops.iter().filter_map(|h| h.gold_sparql.as_deref()).any(|s| {
                parse(s).is_ok_and(|q| matches!(q.projection, Projection::Count { .. }))
            });
            if !has_count {
                return Err(bad("aggregate record without a COUNT query".into()));
            }
        }
        Ok(())
    }

    /// The first knowledge-base hop, 1-based.
    pub fn kb_hop(&self) -> Option<(usize, &HopGold)> {
        self.hops
            .iter()
            .enumerate()
            .find(|(_, h)| h.source == HopSource::Kb)
            .map(|(i, h)| (i + 1, h))
    }
}

pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkRecord>, EvalError> {
    let records: Vec<BenchmarkRecord> = crate::kb::read_records(path)?;
    let mut seen = std::collections::BTreeSet::new();
    for r in &records {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(EvalError::InvalidRecord {
                id: r.id.clone(),
                reason: "duplicate id".into(),
            });
        }
    }
    Ok(records)
}

pub fn write_benchmark(path: &Path, records: &[BenchmarkRecord]) -> Result<(), EvalError> {
    let io = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).expect("benchmark record serializes");
        writeln!(file, "{line}").map_err(io)?;
    }
    file.flush().map_err(io)
}
