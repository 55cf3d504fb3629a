use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Subcommand;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use hetqa_core::datagen::{
    export_tasks, final_benchmark, generate, import_verdicts, AnchorQA, ComposedQuestion, GenerationConfig, Verdict,
};
use hetqa_core::eval::{evaluate_run, load_benchmark, run_benchmark, sparql_diagnostics, write_benchmark};
use hetqa_core::kb::read_records;
use hetqa_core::orchestrator::{KnowledgeSources, Pipeline, PipelineTrace};
use hetqa_core::text_index::linearize_store;

use crate::settings::Settings;

#[derive(Debug, Subcommand)]
pub enum DatagenStage {
    /// Link anchors to triples and generate composed questions.
    Generate {
        /// Line-delimited {question, answer, title, passage} records.
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to log discarded candidates.
        #[arg(long)]
        rejections: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        pairs_per_anchor: usize,
    },
    /// Write annotation tasks, every record once per annotator.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        annotators: usize,
    },
    /// Apply annotator verdicts and write the final benchmark.
    Import {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        verdicts: PathBuf,
        /// Updated composed records.
        #[arg(long)]
        out: PathBuf,
        /// Benchmark without rejected records.
        #[arg(long)]
        benchmark: PathBuf,
    },
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn sources(settings: &Settings) -> Result<KnowledgeSources> {
    let embedder = settings.embedder()?;
    let plan = settings.run.index_plan();
    Ok(KnowledgeSources::build(settings.store()?, settings.passages()?, &plan, embedder.as_ref())?)
}

pub fn ingest(settings: &Settings) -> Result<()> {
    let store = settings.store()?;
    if !store.indexes_consistent() {
        bail!("knowledge base indexes disagree with the triple list");
    }
    let c = store.counts();
    println!("{}", serde_json::to_string(&c)?);
    Ok(())
}

pub fn index(settings: &Settings, dump_kb: Option<&Path>) -> Result<()> {
    let sources = sources(settings)?;
    for (corpus, retriever) in settings.run.index_plan() {
        println!("{corpus:?}/{retriever:?}: ready");
    }
    if let Some(path) = dump_kb {
        write_jsonl(path, &linearize_store(sources.store()))?;
        println!("kb passages: {}", path.display());
    }
    Ok(())
}

pub fn ask(settings: &Settings, question: &str, trace_path: &Path) -> Result<()> {
    let sources = sources(settings)?;
    let (llm, embedder, scorer) = (settings.llm()?, settings.embedder()?, settings.scorer()?);
    let pipeline = Pipeline::new(settings.run.clone(), &sources, &llm, embedder.as_ref(), scorer.as_ref())?;
    let trace = pipeline.answer(question)?;
    std::fs::write(trace_path, serde_json::to_string_pretty(&trace)? + "\n")
        .with_context(|| format!("writing {}", trace_path.display()))?;
    println!("{}", trace.answer);
    println!("trace: {}", trace_path.display());
    Ok(())
}

fn benchmark_path(settings: &Settings, flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| settings.benchmark.clone())
        .context("no benchmark: pass --benchmark or set data.benchmark")
}

pub fn eval(settings: &Settings, benchmark: Option<PathBuf>, out: &Path, parallel: usize) -> Result<()> {
    let records = load_benchmark(&benchmark_path(settings, benchmark)?)?;
    let sources = sources(settings)?;
    let (llm, embedder, scorer) = (settings.llm()?, settings.embedder()?, settings.scorer()?);
    let pipeline = Pipeline::new(settings.run.clone(), &sources, &llm, embedder.as_ref(), scorer.as_ref())?;
    tracing::info!(records = records.len(), parallel, "evaluating benchmark");
    let traces = run_benchmark(&pipeline, &records, parallel)?;
    let report = evaluate_run(&records, &traces)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let table = report.table();
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    std::fs::write(out.join("report.txt"), &table)?;
    std::fs::write(out.join("verdicts.jsonl"), report.verdicts_jsonl())?;
    write_jsonl(&out.join("traces.jsonl"), &traces)?;
    print!("{table}");
    println!("report: {}", out.join("report.json").display());
    Ok(())
}

pub fn diagnose_sparql(settings: &Settings, traces: &Path, benchmark: Option<PathBuf>) -> Result<()> {
    let records = load_benchmark(&benchmark_path(settings, benchmark)?)?;
    let traces: Vec<PipelineTrace> = read_records(traces)?;
    let d = sparql_diagnostics(&traces, &records);
    let mut out = std::io::stdout().lock();
    writeln!(out, "examples {}", d.examples)?;
    writeln!(out, "QID      {:.4}", d.qid_rate)?;
    writeln!(out, "QID+REL  {:.4}", d.qid_rel_rate)?;
    writeln!(out, "QID*     {:.4}", d.qid_star_rate)?;
    Ok(())
}

pub fn datagen(settings: &Settings, stage: DatagenStage) -> Result<()> {
    match stage {
        DatagenStage::Generate {
            anchors,
            out,
            rejections,
            pairs_per_anchor,
        } => {
            let anchors: Vec<AnchorQA> = read_records(&anchors)?;
            let store = settings.store()?;
            let pages = settings.wiki_pages()?;
            let llm = settings.llm()?;
            let config = GenerationConfig {
                seed: settings.seed(),
                pairs_per_anchor,
            };
            let output = generate(anchors, &store, &pages, &llm, &config);
            write_jsonl(&out, &output.records)?;
            if let Some(path) = rejections {
                write_jsonl(&path, &output.rejections)?;
            }
            println!("records: {}  rejected: {}", output.records.len(), output.rejections.len());
        }
        DatagenStage::Export { input, out, annotators } => {
            let records: Vec<ComposedQuestion> = read_records(&input)?;
            let tasks = export_tasks(&records, annotators, &mut ChaCha8Rng::seed_from_u64(settings.seed()));
            write_jsonl(&out, &tasks)?;
            println!("tasks: {}", tasks.len());
        }
        DatagenStage::Import {
            input,
            verdicts,
            out,
            benchmark,
        } => {
            let mut records: Vec<ComposedQuestion> = read_records(&input)?;
            let verdicts: Vec<Verdict> = read_records(&verdicts)?;
            import_verdicts(&mut records, &verdicts)?;
            write_jsonl(&out, &records)?;
            let bench = final_benchmark(&records);
            write_benchmark(&benchmark, &bench)?;
            println!("benchmark records: {}", bench.len());
        }
    }
    Ok(())
}
