//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use hrag_core::conversation::replay::{self, parse_conversations, write_submissions, HistoryMode, ReplayConfig};
use hrag_core::conversation::{Providers, SamplingParams, TurnConfig};
use hrag_core::corpus::read_corpus_file;
use hrag_core::embedding::EmbeddingError;
use hrag_core::eval::{
    evaluate_run, read_queries_tsv, run_sweep, write_sweep_csv, EvalError, Qrels, SweepGrid, DEFAULT_CUTOFFS,
};
use hrag_core::index::IndexError;
use hrag_core::{Corpus, CorpusError, EvalReport, HybridConfig, PipelineError, RankingError, Retriever, RunFile};
use serde_json::json;
use tracing::{info, warn};

use crate::config::PipelineConfig;
use crate::{Cli, Command, Format, HistoryModeArg};

/// A failed command and whether the caller (exit 2) or the program (exit 1)
/// is at fault.
#[derive(Debug)]
pub struct Failure {
    pub error: anyhow::Error,
    input: bool,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self { error: error.into(), input: true }
    }

    fn internal(error: impl Into<anyhow::Error>) -> Self {
        Self { error: error.into(), input: false }
    }

    pub fn code(&self) -> u8 {
        if self.input {
            2
        } else {
            1
        }
    }
}

fn embedding_failure(e: EmbeddingError) -> Failure {
    match e {
        EmbeddingError::InvalidConfig(_) | EmbeddingError::EmptyInput => Failure::input(e),
        _ => Failure::internal(e),
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Corpus(_) | PipelineError::Snapshot { .. } => Failure::input(e),
        PipelineError::Embedding(inner) => embedding_failure(inner),
        PipelineError::Index(IndexError::InvalidConfig(_)) => Failure::input(e),
        PipelineError::Ranking(RankingError::InvalidConfig(_)) => Failure::input(e),
        other => Failure::internal(other),
    }
}

fn write_file(path: &Path, render: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), Failure> {
    let context = || format!("cannot write {}", path.display());
    let mut out = BufWriter::new(File::create(path).with_context(context).map_err(Failure::input)?);
    render(&mut out).and_then(|()| out.flush()).with_context(context).map_err(Failure::internal)
}

/// Writes to stdout. A closed pipe (`hrag ... | head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::internal(e)),
        _ => Ok(()),
    }
}

fn print_json(value: &serde_json::Value) -> Result<(), Failure> {
    emit(&format!("{}\n", serde_json::to_string_pretty(value).expect("JSON values serialize")))
}

fn load_retriever(config: &PipelineConfig) -> Result<Retriever, Failure> {
    if !config.snapshot.exists() {
        return Err(Failure::input(anyhow!(
            "snapshot {} not found; run `hrag ingest` first",
            config.snapshot.display()
        )));
    }
    let retriever = Retriever::load(&config.snapshot).map_err(pipeline_failure)?;
    if retriever.settings().embedder != config.embedder {
        warn!("snapshot was built with a different embedder than configured; using the snapshot's");
    }
    Ok(retriever)
}

fn hybrid(config: &PipelineConfig) -> Result<HybridConfig, Failure> {
    HybridConfig::new(config.retrieval.alpha, config.retrieval.k).map_err(Failure::input)
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = PipelineConfig::load(cli.shared.config.as_deref()).map_err(Failure::input)?;
    config.apply(&cli.shared.overrides()).map_err(Failure::input)?;
    let format = cli.shared.format;
    match cli.command {
        Command::Ingest { corpus, force } => ingest(&config, &corpus, force, format),
        Command::Search { query } => search(&config, &query, format),
        Command::Replay { conversations, output, run, final_only, history_mode } => {
            if let Some(v) = final_only {
                config.conversation.final_only = v;
            }
            if let Some(mode) = history_mode {
                config.conversation.history_mode = match mode {
                    HistoryModeArg::Generated => HistoryMode::Generated,
                    HistoryModeArg::Gold => HistoryMode::Gold,
                };
            }
            replay_cmd(&config, &conversations, &output, &run, format)
        }
        Command::Eval { run, qrels } => eval(&config, &run, &qrels, format),
        Command::Sweep { queries, qrels, alphas, ks, strategies, output } => {
            let defaults = SweepGrid::default();
            let grid = SweepGrid {
                alphas: alphas.unwrap_or(defaults.alphas),
                strategies: strategies.unwrap_or(defaults.strategies),
                ks: ks.unwrap_or(defaults.ks),
            };
            sweep(&config, &queries, &qrels, &grid, output.as_deref(), format)
        }
    }
}

fn ingest(config: &PipelineConfig, corpus_path: &Path, force: bool, format: Format) -> Result<(), Failure> {
    if config.snapshot.exists() && !force {
        return Err(Failure::input(anyhow!(
            "snapshot {} already exists; pass --force to overwrite",
            config.snapshot.display()
        )));
    }
    config.chunking.validate().map_err(Failure::input)?;
    let records = read_corpus_file(corpus_path).map_err(Failure::input)?;
    let mut corpus = Corpus::new();
    let stats = corpus.ingest(records, config.chunking).map_err(|e: CorpusError| Failure::input(e))?;
    let retriever = Retriever::build(corpus, config.index_settings()).map_err(pipeline_failure)?;
    retriever.save(&config.snapshot).map_err(pipeline_failure)?;
    info!(snapshot = %config.snapshot.display(), "index written");
    match format {
        Format::Json => print_json(&json!({
            "docs": stats.docs,
            "chunks": stats.chunks,
            "skipped": stats.skipped,
            "snapshot": config.snapshot.display().to_string(),
        })),
        Format::Text => emit(&format!(
            "docs={} chunks={} skipped={} snapshot={}\n",
            stats.docs,
            stats.chunks,
            stats.skipped,
            config.snapshot.display()
        )),
    }
}

fn search(config: &PipelineConfig, query: &str, format: Format) -> Result<(), Failure> {
    if query.trim().is_empty() {
        return Err(Failure::input(anyhow!("query is empty")));
    }
    let retriever = load_retriever(config)?;
    let retrieval = retriever.retrieve(query, &hybrid(config)?, &config.ranking).map_err(pipeline_failure)?;
    match format {
        Format::Json => print_json(&json!({
            "query": query,
            "alpha": config.retrieval.alpha,
            "k": config.retrieval.k,
            "strategy": config.ranking.strategy,
            "parents": retrieval.ranking.parents.iter().map(|p| json!({
                "doc_id": p.parent_id,
                "score": p.score,
                "chunk_ids": p.chunk_ids,
            })).collect::<Vec<_>>(),
        })),
        Format::Text => {
            let mut text = String::new();
            if retrieval.ranking.is_empty() {
                text.push_str("no matching documents\n");
            }
            for (i, p) in retrieval.ranking.parents.iter().enumerate() {
                text += &format!("{:>2}. {}  {:.4}  [{}]\n", i + 1, p.parent_id, p.score, p.chunk_ids.join(", "));
            }
            emit(&text)
        }
    }
}

fn replay_cmd(
    config: &PipelineConfig,
    conversations: &Path,
    output: &Path,
    run_path: &Path,
    format: Format,
) -> Result<(), Failure> {
    let text = fs::read_to_string(conversations)
        .with_context(|| format!("cannot read conversations {}", conversations.display()))
        .map_err(Failure::input)?;
    let records = parse_conversations(&text).map_err(Failure::input)?;
    let malformed = records.iter().filter(|r| r.is_err()).count();
    let total = records.len();
    let retriever = if total > malformed { Some(load_retriever(config)?) } else { None };

    let providers = Providers {
        rewriter: config.rewrite.build().map_err(Failure::input)?,
        generator: config.generation.build().map_err(Failure::input)?,
    };
    let replay_config = ReplayConfig {
        turn: TurnConfig {
            hybrid: hybrid(config)?,
            ranking: config.ranking,
            history_window: config.conversation.history_window,
            rewrite: SamplingParams { temperature: config.rewrite.temperature, max_tokens: config.rewrite.max_tokens },
            generation: SamplingParams {
                temperature: config.generation.temperature,
                max_tokens: config.generation.max_tokens,
            },
        },
        history_mode: config.conversation.history_mode,
        final_only: config.conversation.final_only,
    };
    let out = match &retriever {
        Some(r) => replay::replay(records, r, &providers, &replay_config),
        None => replay::ReplayOutput {
            submissions: Vec::new(),
            run: RunFile::new(),
            failures: records.into_iter().filter_map(Result::err).collect(),
        },
    };

    write_file(output, |w| write_submissions(&out.submissions, w))?;
    write_file(run_path, |w| out.run.write(w, &config.eval.run_tag))?;
    for f in &out.failures {
        warn!(index = f.index, conversation = f.conversation_id.as_deref().unwrap_or("?"), "{}", f.message);
    }
    match format {
        Format::Json => print_json(&json!({
            "conversations": total,
            "submissions": out.submissions.len(),
            "run_queries": out.run.len(),
            "failures": out.failures,
            "output": output.display().to_string(),
            "run": run_path.display().to_string(),
        })),
        Format::Text => emit(&format!(
            "conversations={total} submissions={} run_queries={} failures={} output={} run={}\n",
            out.submissions.len(),
            out.run.len(),
            out.failures.len(),
            output.display(),
            run_path.display()
        )),
    }?;
    match out.failures.len() {
        0 => Ok(()),
        n if malformed > 0 => Err(Failure::input(anyhow!("{n} of {total} conversations failed ({malformed} malformed)"))),
        n => Err(Failure::internal(anyhow!("{n} of {total} conversations failed"))),
    }
}

/// Parse errors only carry a line number, so name the file.
fn eval_failure(path: &Path) -> impl Fn(EvalError) -> Failure + '_ {
    move |e| match e {
        EvalError::Parse { .. } => Failure::input(anyhow::Error::new(e).context(format!("invalid {}", path.display()))),
        other => Failure::input(other),
    }
}

fn report_text(report: &EvalReport) -> String {
    let mut text = String::new();
    let header: Vec<String> = report
        .cutoffs
        .iter()
        .map(|k| format!("nDCG@{k}"))
        .chain(report.cutoffs.iter().map(|k| format!("Recall@{k}")))
        .collect();
    let width = report.per_query.iter().map(|q| q.query_id.len()).max().unwrap_or(0).max(5);
    text += &format!("{:<width$}  {}\n", "query", header.iter().map(|h| format!("{h:>9}")).collect::<String>());
    let row = |label: &str, ndcg: &[f64], recall: &[f64]| {
        let cells: String = ndcg.iter().chain(recall).map(|v| format!("{v:>9.4}")).collect();
        format!("{label:<width$}  {cells}\n")
    };
    for q in &report.per_query {
        text += &row(&q.query_id, &q.ndcg, &q.recall);
    }
    text += &row("mean", &report.mean_ndcg, &report.mean_recall);
    if let (Some(n), Some(r)) = (report.mean_ndcg_at(5), report.mean_recall_at(5)) {
        text += &format!("nDCG@5 = {n:.4}  Recall@5 = {r:.4}\n");
    }
    text += &format!("judged queries missing from run (scored 0): {}\n", report.missing_from_run);
    text += &format!("run queries without judgments (ignored): {}\n", report.unjudged_queries);
    text
}

fn eval(config: &PipelineConfig, run_path: &Path, qrels_path: &Path, format: Format) -> Result<(), Failure> {
    let run = RunFile::read(run_path).map_err(eval_failure(run_path))?;
    let qrels = Qrels::read(qrels_path).map_err(eval_failure(qrels_path))?;
    let report = evaluate_run(&run, &qrels, &DEFAULT_CUTOFFS, config.eval.gain).map_err(Failure::input)?;
    if report.unjudged_queries > 0 {
        warn!(count = report.unjudged_queries, "run queries have no judgments and were ignored");
    }
    match format {
        Format::Json => print_json(&serde_json::to_value(&report).map_err(Failure::internal)?),
        Format::Text => emit(&report_text(&report)),
    }
}

fn sweep(
    config: &PipelineConfig,
    queries_path: &Path,
    qrels_path: &Path,
    grid: &SweepGrid,
    output: Option<&Path>,
    format: Format,
) -> Result<(), Failure> {
    if grid.is_empty() {
        return Err(Failure::input(anyhow!("sweep grid is empty")));
    }
    let queries = read_queries_tsv(queries_path).map_err(eval_failure(queries_path))?;
    let qrels = Qrels::read(qrels_path).map_err(eval_failure(qrels_path))?;
    if !queries.iter().any(|(id, _)| qrels.get(id).is_some()) {
        return Err(Failure::input(EvalError::NoSharedQueries));
    }
    let retriever = load_retriever(config)?;
    let rows = run_sweep(&retriever, &queries, &qrels, grid, &config.ranking, config.eval.gain);
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        warn!(failed, "some sweep configurations failed; see the error column");
    }
    let render = |w: &mut dyn Write| -> io::Result<()> {
        match format {
            Format::Text => write_sweep_csv(&rows, w),
            Format::Json => {
                let value: Vec<_> = rows
                    .iter()
                    .map(|r| {
                        json!({
                            "alpha": r.config.alpha,
                            "rank_parents": r.config.strategy.rank_parents(),
                            "k": r.config.k,
                            "best": r.best,
                            "report": r.outcome.as_ref().ok(),
                            "error": r.outcome.as_ref().err(),
                        })
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut *w, &value)?;
                writeln!(w)
            }
        }
    };
    match output {
        Some(path) => write_file(path, |w| render(w)),
        None => {
            let mut buf = Vec::new();
            render(&mut buf).map_err(Failure::internal)?;
            emit(&String::from_utf8_lossy(&buf))
        }
    }
}
