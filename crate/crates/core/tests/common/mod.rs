#![allow(dead_code)]

pub mod random;

use std::path::{Path, PathBuf};

use hetqa_core::eval::{load_benchmark, BenchmarkRecord};
use hetqa_core::kb::{read_records, TripleStore};
use hetqa_core::llm::ScriptedProvider;
use hetqa_core::orchestrator::{KnowledgeSources, RunConfig};
use hetqa_core::providers::HashingEmbedder;
use hetqa_core::text_index::Passage;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn store() -> TripleStore {
    TripleStore::ingest_dir(&fixture("kb")).expect("fixture kb loads")
}

pub fn passages() -> Vec<Passage> {
    read_records(&fixture("passages.jsonl")).expect("fixture passages load")
}

pub fn embedder() -> HashingEmbedder {
    HashingEmbedder::default()
}

pub fn benchmark() -> Vec<BenchmarkRecord> {
    load_benchmark(&fixture("benchmark.jsonl")).expect("fixture benchmark loads")
}

pub fn script() -> ScriptedProvider {
    ScriptedProvider::load(&fixture("llm_script.jsonl")).expect("fixture script loads")
}

pub fn run_config() -> RunConfig {
    RunConfig::load(&fixture("run.toml")).expect("fixture config loads")
}

/// Indexes for every route `config` needs.
pub fn sources_for(config: &RunConfig) -> KnowledgeSources {
    KnowledgeSources::build(store(), passages(), &config.index_plan(), &embedder()).expect("fixture indexes build")
}

/// Indexes for every corpus and retriever combination.
pub fn all_sources() -> KnowledgeSources {
    use hetqa_core::orchestrator::CorpusKind;
    use hetqa_core::text_index::RetrieverKind;
    let plan = [CorpusKind::Text, CorpusKind::Kb, CorpusKind::Unified]
        .into_iter()
        .flat_map(|c| [RetrieverKind::Sparse, RetrieverKind::Dense].map(|r| (c, r)))
        .collect();
    KnowledgeSources::build(store(), passages(), &plan, &embedder()).expect("fixture indexes build")
}
