//! `hrag`: ingest a corpus, search it, replay conversations, and evaluate runs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hrag_core::RankingStrategy;
use tracing_subscriber::EnvFilter;

use config::{EmbedderFlag, Overrides};

#[derive(Debug, Parser)]
#[command(name = "hrag", version, about = "Hierarchical parent-child retrieval and grounded answering")]
struct Cli {
    #[command(flatten)]
    shared: SharedArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct SharedArgs {
    /// TOML config file; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Index snapshot path [default: hrag-index.json]
    #[arg(long, global = true, value_name = "FILE")]
    snapshot: Option<PathBuf>,
    /// Weight of the dense leg in hybrid fusion, in [0, 1] [default: 0.7]
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Candidates taken from each retrieval leg [default: 50]
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Parents passed on after ranking [default: 5]
    #[arg(long, global = true)]
    top_n: Option<usize>,
    /// Parent ranking strategy: child_first or parent_rescore [default: child_first]
    #[arg(long, global = true)]
    strategy: Option<RankingStrategy>,
    /// Embedder used at ingest: hashing, hashing:<dim>, or remote (configured in the file) [default: hashing:256]
    #[arg(long, global = true, value_name = "SPEC")]
    embedder: Option<EmbedderFlag>,
    /// Use the remote text providers configured in the file for rewriting and generation [default: stub providers]
    #[arg(long, global = true)]
    remote_llm: bool,
    /// Output format [default: text]
    #[arg(long, global = true, value_enum, default_value_t = Format::Text, hide_default_value = true)]
    format: Format,
    /// More logging on stderr (-v info, -vv debug); HRAG_LOG takes precedence
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HistoryModeArg {
    Generated,
    Gold,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk and index a JSONL corpus ({"document_id", "text", "title"?} per line)
    Ingest {
        corpus: PathBuf,
        /// Overwrite an existing snapshot
        #[arg(long)]
        force: bool,
    },
    /// Rank parent documents for one query
    Search { query: String },
    /// Run every user turn of a conversations file through the pipeline
    Replay {
        conversations: PathBuf,
        /// Submission records, one JSON object per line
        #[arg(long, default_value = "submissions.jsonl")]
        output: PathBuf,
        /// TREC run with one query per user turn
        #[arg(long, default_value = "run.trec")]
        run: PathBuf,
        /// Only the last user turn of each conversation gets a submission record [default: true]
        #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
        final_only: Option<bool>,
        /// Answers used as history for later turns [default: generated]
        #[arg(long, value_enum)]
        history_mode: Option<HistoryModeArg>,
    },
    /// Score a TREC run against TREC qrels at cutoffs 1, 3 and 5
    Eval { run: PathBuf, qrels: PathBuf },
    /// Evaluate a grid of retrieval settings over a query set
    Sweep {
        /// Tab-separated query_id and query text, one per line
        queries: PathBuf,
        qrels: PathBuf,
        /// Hybrid weights to try [default: 0.5,0.7,0.9]
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// Candidate pool sizes to try [default: 20,30,50]
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        /// Ranking strategies to try [default: parent_rescore,child_first]
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<RankingStrategy>>,
        /// Write the table here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

impl SharedArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            snapshot: self.snapshot.clone(),
            alpha: self.alpha,
            k: self.k,
            top_n: self.top_n,
            strategy: self.strategy,
            embedder: self.embedder,
            remote_llm: self.remote_llm,
        }
    }
}

fn init_tracing(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_env("HRAG_LOG").unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).with_target(false).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_tracing(cli.shared.verbose);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {:#}", err.error);
            ExitCode::from(err.code())
        }
    }
}
