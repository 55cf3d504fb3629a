//! Multi-hop question answering over heterogeneous knowledge: Wikipedia-style
//! passages plus a Wikidata-style knowledge base.

pub mod kb;
pub mod sparql;
pub mod providers;
pub mod text_index;
pub mod linker;
pub mod rerank;
pub mod llm;
pub mod orchestrator;
pub mod eval;
pub mod datagen;
