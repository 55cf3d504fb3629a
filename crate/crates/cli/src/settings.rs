//! Layered configuration: flag, then environment (both via clap), then the
//! config file, then built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use hetqa_core::kb::{read_records, TripleStore};
use hetqa_core::llm::{ChatCompletionsProvider, RecordingProvider, ScriptedProvider, TextGenerator, ENV_KEY};
use hetqa_core::orchestrator::{Mode, RunConfig};
use hetqa_core::providers::{EmbeddingProvider, HashingEmbedder, RelevanceScorer, ShimClient};
use hetqa_core::rerank::LexicalScorer;
use hetqa_core::text_index::Passage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmKind {
    /// Replay completions from a script file.
    Scripted,
    /// Chat-completions HTTP endpoint.
    Chat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Hashing,
    Shim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Lexical,
    Shim,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML file with [run], [data] and [providers] tables.
    #[arg(long, short = 'c', global = true, env = "HETQA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for sampling and shuffling.
    #[arg(long, global = true, env = "HETQA_SEED")]
    pub seed: Option<u64>,
    /// Directory with entities.jsonl, relations.jsonl and triples.jsonl.
    #[arg(long, global = true, env = "HETQA_KB")]
    pub kb: Option<PathBuf>,
    /// Line-delimited text passages.
    #[arg(long, global = true, env = "HETQA_PASSAGES")]
    pub passages: Option<PathBuf>,
    /// detllm, vanilla, closed_book or oracle.
    #[arg(long, global = true, env = "HETQA_MODE")]
    pub mode: Option<Mode>,
    #[arg(long, global = true, value_enum, env = "HETQA_LLM")]
    pub llm: Option<LlmKind>,
    /// Script served by the scripted provider.
    #[arg(long, global = true, env = "HETQA_LLM_SCRIPT")]
    pub llm_script: Option<PathBuf>,
    #[arg(long, global = true, env = "HETQA_LLM_URL")]
    pub llm_url: Option<String>,
    #[arg(long, global = true, env = "HETQA_LLM_MODEL")]
    pub llm_model: Option<String>,
    /// Append every LLM exchange to this replay file.
    #[arg(long, global = true, env = "HETQA_LLM_RECORD")]
    pub record: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "HETQA_EMBEDDER")]
    pub embedder: Option<EmbedderKind>,
    #[arg(long, global = true, value_enum, env = "HETQA_SCORER")]
    pub scorer: Option<ScorerKind>,
    /// Base URL of the embedding and reranking service.
    #[arg(long, global = true, env = "HETQA_SHIM_URL")]
    pub shim_url: Option<String>,
    /// More log output; repeat for debug.
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataSection {
    kb_dir: Option<PathBuf>,
    passages: Option<PathBuf>,
    benchmark: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProviderSection {
    llm: Option<LlmKind>,
    llm_script: Option<PathBuf>,
    llm_url: Option<String>,
    llm_model: Option<String>,
    embedder: Option<EmbedderKind>,
    scorer: Option<ScorerKind>,
    shim_url: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    run: RunConfig,
    data: DataSection,
    providers: ProviderSection,
}

/// Fully resolved settings.
#[derive(Debug)]
pub struct Settings {
    pub run: RunConfig,
    pub kb_dir: Option<PathBuf>,
    pub passages: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub llm: LlmKind,
    pub llm_script: Option<PathBuf>,
    pub llm_url: Option<String>,
    pub llm_model: Option<String>,
    pub record: Option<PathBuf>,
    pub embedder: EmbedderKind,
    pub scorer: ScorerKind,
    pub shim_url: Option<String>,
}

fn relative_to(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_relative() { base.join(p) } else { p })
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let mut cfg: FileConfig =
                    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.kb_dir = relative_to(base, cfg.data.kb_dir);
                cfg.data.passages = relative_to(base, cfg.data.passages);
                cfg.data.benchmark = relative_to(base, cfg.data.benchmark);
                cfg.providers.llm_script = relative_to(base, cfg.providers.llm_script);
                cfg
            }
            None => FileConfig::default(),
        };
        let mut run = file.run;
        if let Some(mode) = args.mode {
            run.mode = mode;
        }
        if args.seed.is_some() {
            run.seed = args.seed;
        }
        run.validate()?;
        Ok(Self {
            run,
            kb_dir: args.kb.clone().or(file.data.kb_dir),
            passages: args.passages.clone().or(file.data.passages),
            benchmark: file.data.benchmark,
            llm: args.llm.or(file.providers.llm).unwrap_or(LlmKind::Chat),
            llm_script: args.llm_script.clone().or(file.providers.llm_script),
            llm_url: args.llm_url.clone().or(file.providers.llm_url),
            llm_model: args.llm_model.clone().or(file.providers.llm_model),
            record: args.record.clone(),
            embedder: args.embedder.or(file.providers.embedder).unwrap_or(EmbedderKind::Hashing),
            scorer: args.scorer.or(file.providers.scorer).unwrap_or(ScorerKind::Lexical),
            shim_url: args.shim_url.clone().or(file.providers.shim_url),
        })
    }

    pub fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(0)
    }

    pub fn store(&self) -> Result<TripleStore> {
        let Some(dir) = &self.kb_dir else {
            bail!("no knowledge base: pass --kb or set data.kb_dir");
        };
        TripleStore::ingest_dir(dir).with_context(|| format!("loading knowledge base {}", dir.display()))
    }

    pub fn passages(&self) -> Result<Vec<Passage>> {
        match &self.passages {
            Some(path) => read_records(path).with_context(|| format!("loading passages {}", path.display())),
            None => Ok(Vec::new()),
        }
    }

    /// Page text by title, for the datagen retention filter.
    pub fn wiki_pages(&self) -> Result<BTreeMap<String, String>> {
        Ok(self.passages()?.into_iter().map(|p| (p.title, p.body)).collect())
    }

    fn shim(&self) -> Result<ShimClient> {
        match &self.shim_url {
            Some(url) => Ok(ShimClient::new(url.clone())),
            None => bail!("the shim provider needs --shim-url or providers.shim_url"),
        }
    }

    pub fn embedder(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self.embedder {
            EmbedderKind::Hashing => Box::new(HashingEmbedder::default()),
            EmbedderKind::Shim => Box::new(self.shim()?),
        })
    }

    pub fn scorer(&self) -> Result<Box<dyn RelevanceScorer>> {
        Ok(match self.scorer {
            ScorerKind::Lexical => Box::new(LexicalScorer),
            ScorerKind::Shim => Box::new(self.shim()?),
        })
    }

    pub fn llm(&self) -> Result<Box<dyn TextGenerator>> {
        let inner: Box<dyn TextGenerator> = match self.llm {
            LlmKind::Scripted => {
                let Some(path) = &self.llm_script else {
                    bail!("the scripted provider needs --llm-script or providers.llm_script");
                };
                Box::new(ScriptedProvider::load(path)?)
            }
            LlmKind::Chat => {
                let (Some(url), Some(model)) = (&self.llm_url, &self.llm_model) else {
                    bail!("the chat provider needs --llm-url and --llm-model (or HETQA_LLM_URL and HETQA_LLM_MODEL)");
                };
                Box::new(ChatCompletionsProvider::new(url.clone(), model.clone(), std::env::var(ENV_KEY).ok()))
            }
        };
        Ok(match &self.record {
            Some(path) => Box::new(RecordingProvider::new(inner, path)?),
            None => inner,
        })
    }
}
