//! Pipeline configuration: built-in defaults, overlaid by an optional TOML
//! file, overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hrag_core::conversation::provider::{ProviderKind, TextProviderConfig};
use hrag_core::conversation::replay::HistoryMode;
use hrag_core::conversation::DEFAULT_HISTORY_WINDOW;
use hrag_core::eval::Gain;
use hrag_core::index::{DEFAULT_ALPHA, DEFAULT_K};
use hrag_core::{ChunkingConfig, EmbeddingProviderConfig, IndexSettings, RankingConfig, RankingStrategy};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SNAPSHOT: &str = "hrag-index.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub alpha: f64,
    pub k: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, k: DEFAULT_K }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConversationSection {
    pub history_window: usize,
    pub history_mode: HistoryMode,
    pub final_only: bool,
}

impl Default for ConversationSection {
    fn default() -> Self {
        Self { history_window: DEFAULT_HISTORY_WINDOW, history_mode: HistoryMode::Generated, final_only: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub gain: Gain,
    pub run_tag: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { gain: Gain::Exponential, run_tag: "hrag".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub snapshot: PathBuf,
    pub chunking: ChunkingConfig,
    pub embedder: EmbeddingProviderConfig,
    pub rescorer: Option<EmbeddingProviderConfig>,
    pub embed_title: bool,
    pub retrieval: RetrievalSection,
    pub ranking: RankingConfig,
    pub rewrite: TextProviderConfig,
    pub generation: TextProviderConfig,
    pub conversation: ConversationSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            snapshot: PathBuf::from(DEFAULT_SNAPSHOT),
            chunking: ChunkingConfig::default(),
            embedder: EmbeddingProviderConfig::default(),
            rescorer: None,
            embed_title: false,
            retrieval: RetrievalSection::default(),
            ranking: RankingConfig::default(),
            rewrite: TextProviderConfig::rewrite(),
            generation: TextProviderConfig::generation(),
            conversation: ConversationSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Flag values that override the file; `None` leaves the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub snapshot: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub top_n: Option<usize>,
    pub strategy: Option<RankingStrategy>,
    pub embedder: Option<EmbedderFlag>,
    pub remote_llm: bool,
}

/// `--embedder` value: `hashing`, `hashing:<dim>`, or `remote`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedderFlag {
    Hashing(Option<usize>),
    Remote,
}

impl std::str::FromStr for EmbedderFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "hashing" => Ok(EmbedderFlag::Hashing(None)),
            None if s == "remote" => Ok(EmbedderFlag::Remote),
            Some(("hashing", dim)) => dim
                .parse()
                .map(|d| EmbedderFlag::Hashing(Some(d)))
                .map_err(|_| format!("invalid hashing dimension {dim:?}")),
            _ => Err(format!("unknown embedder {s:?} (expected hashing, hashing:<dim> or remote)")),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn apply(&mut self, flags: &Overrides) -> anyhow::Result<()> {
        if let Some(path) = &flags.snapshot {
            self.snapshot = path.clone();
        }
        if let Some(alpha) = flags.alpha {
            self.retrieval.alpha = alpha;
        }
        if let Some(k) = flags.k {
            self.retrieval.k = k;
        }
        if let Some(top_n) = flags.top_n {
            self.ranking.top_n = top_n;
        }
        if let Some(strategy) = flags.strategy {
            self.ranking.strategy = strategy;
        }
        let is_remote = |c: &EmbeddingProviderConfig| matches!(c, EmbeddingProviderConfig::Remote { .. });
        match flags.embedder {
            Some(EmbedderFlag::Hashing(dim)) => {
                self.embedder = EmbeddingProviderConfig::Hashing { dim: dim.unwrap_or(self.embedder.dim()) };
            }
            Some(EmbedderFlag::Remote) if !is_remote(&self.embedder) => {
                bail!("--embedder remote needs an [embedder] table with kind = \"remote\", endpoint, model and dim in the config file");
            }
            Some(EmbedderFlag::Remote) => {}
            None if is_remote(&self.embedder) || self.rescorer.as_ref().is_some_and(is_remote) => {
                bail!("the config file selects a remote embedding provider; pass --embedder remote to use it");
            }
            None => {}
        }
        if flags.remote_llm {
            self.rewrite.kind = ProviderKind::Remote;
            self.generation.kind = ProviderKind::Remote;
        } else if self.rewrite.kind == ProviderKind::Remote || self.generation.kind == ProviderKind::Remote {
            bail!("the config file selects a remote text provider; pass --remote-llm to use it");
        }
        Ok(())
    }

    pub fn index_settings(&self) -> IndexSettings {
        IndexSettings {
            chunking: self.chunking,
            embedder: self.embedder.clone(),
            rescorer: self.rescorer.clone(),
            embed_title: self.embed_title,
        }
    }
}
