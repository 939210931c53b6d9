//! The query-time retrieval path: embed, hybrid search, rank parents.
//!
//! A [`Retriever`] owns the ingested corpus, its hybrid index, and the
//! embedding providers. It can be persisted as a versioned JSON snapshot and
//! reloaded read-only.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ChildChunk, ChunkingConfig, Corpus, CorpusError};
use crate::embedding::{Embedder, EmbeddingError, EmbeddingProviderConfig, EmbeddingVector};
use crate::index::{DenseIndex, HybridConfig, HybridIndex, IndexError, ScoredCandidate, VectorLookup};
use crate::ranking::{
    rank_parents_with_rescore, rescore_children, walk_parents, ParentRanking, ParentStore, RankingConfig,
    RankingError, RankingStrategy,
};
use crate::scalar::Scalar;

pub const SNAPSHOT_FORMAT: &str = "hrag-index";
pub const SNAPSHOT_VERSION: u32 = 1;
const EMBED_BATCH: usize = 256;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error("snapshot {path}: {message}")]
    Snapshot { path: String, message: String },
}

impl PipelineError {
    fn snapshot(path: &Path, message: impl ToString) -> Self {
        PipelineError::Snapshot { path: path.display().to_string(), message: message.to_string() }
    }
}

/// Everything needed to rebuild the providers of a persisted index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexSettings {
    pub chunking: ChunkingConfig,
    pub embedder: EmbeddingProviderConfig,
    /// `None` rescores with the indexing embedder and its stored vectors.
    pub rescorer: Option<EmbeddingProviderConfig>,
    /// Prefix chunk text with the parent title before embedding.
    pub embed_title: bool,
}

impl IndexSettings {
    /// The rescorer config, or `None` when it would duplicate the embedder.
    fn distinct_rescorer(&self) -> Option<&EmbeddingProviderConfig> {
        self.rescorer.as_ref().filter(|r| **r != self.embedder)
    }
}

struct Rescorer<T: Scalar> {
    provider: Arc<dyn Embedder<T>>,
    chunk_vectors: DenseIndex<T>,
}

/// Output of one retrieval: fused candidates and the parent ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval<T> {
    pub candidates: Vec<ScoredCandidate<T>>,
    pub ranking: ParentRanking<T>,
}

pub struct Retriever<T: Scalar> {
    settings: IndexSettings,
    corpus: Corpus,
    index: HybridIndex<T>,
    embedder: Arc<dyn Embedder<T>>,
    rescorer: Option<Rescorer<T>>,
}

impl ParentStore for Corpus {
    fn parent_text(&self, parent_id: &str) -> Option<&str> {
        self.parent(parent_id).map(|d| d.text.as_str())
    }
}

fn embedding_text<'a>(corpus: &'a Corpus, chunk: &'a ChildChunk, embed_title: bool) -> std::borrow::Cow<'a, str> {
    match corpus.parent(&chunk.parent_id).and_then(|p| p.title.as_deref()) {
        Some(title) if embed_title => format!("{title}\n{}", chunk.text).into(),
        _ => chunk.text.as_str().into(),
    }
}

fn embed_chunks<T: Scalar>(
    corpus: &Corpus,
    embedder: &dyn Embedder<T>,
    embed_title: bool,
) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError> {
    let texts: Vec<_> = corpus
        .chunks()
        .iter()
        .map(|c| embedding_text(corpus, c, embed_title))
        .collect();
    let batches: Vec<Vec<EmbeddingVector<T>>> = texts
        .par_chunks(EMBED_BATCH)
        .map(|batch| {
            let refs: Vec<&str> = batch.iter().map(|t| t.as_ref()).collect();
            embedder.embed(&refs)
        })
        .collect::<Result<_, _>>()?;
    let vectors: Vec<EmbeddingVector<T>> = batches.into_iter().flatten().collect();
    if let Some(v) = vectors.iter().find(|v| v.dim() != embedder.dim()) {
        return Err(EmbeddingError::DimensionMismatch { expected: embedder.dim(), actual: v.dim() });
    }
    Ok(vectors)
}

impl<T: Scalar> Retriever<T> {
    /// Builds providers from `settings` and indexes `corpus`.
    pub fn build(corpus: Corpus, settings: IndexSettings) -> Result<Self, PipelineError> {
        let embedder = settings.embedder.build::<T>()?;
        let rescorer = settings.distinct_rescorer().map(|cfg| cfg.build::<T>()).transpose()?;
        Self::build_with(corpus, settings, embedder, rescorer)
    }

    /// Indexes `corpus` with caller-supplied providers. A `rescorer` of
    /// `None` reuses the indexing embedder for rescoring.
    pub fn build_with(
        corpus: Corpus,
        settings: IndexSettings,
        embedder: Arc<dyn Embedder<T>>,
        rescorer: Option<Arc<dyn Embedder<T>>>,
    ) -> Result<Self, PipelineError> {
        let vectors = embed_chunks(&corpus, embedder.as_ref(), settings.embed_title)?;
        let index = HybridIndex::build(corpus.chunks(), vectors, embedder.dim())?;
        let rescorer = rescorer
            .map(|provider| -> Result<_, PipelineError> {
                let vectors = embed_chunks(&corpus, provider.as_ref(), settings.embed_title)?;
                let entries = corpus.chunks().iter().map(|c| c.chunk_id.clone()).zip(vectors).collect();
                let chunk_vectors = DenseIndex::build(provider.dim(), entries)?;
                Ok(Rescorer { provider, chunk_vectors })
            })
            .transpose()?;
        Ok(Self { settings, corpus, index, embedder, rescorer })
    }

    pub fn settings(&self) -> &IndexSettings {
        &self.settings
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn index(&self) -> &HybridIndex<T> {
        &self.index
    }

    pub fn embedder(&self) -> &dyn Embedder<T> {
        self.embedder.as_ref()
    }

    fn rescore_provider(&self) -> &dyn Embedder<T> {
        self.rescorer.as_ref().map_or(self.embedder.as_ref(), |r| r.provider.as_ref())
    }

    fn rescore_vectors(&self) -> &dyn VectorLookup<T> {
        self.rescorer.as_ref().map_or(self.index.dense(), |r| &r.chunk_vectors)
    }

    /// Hybrid search followed by parent ranking under `ranking.strategy`.
    pub fn retrieve(
        &self,
        query: &str,
        hybrid: &HybridConfig<T>,
        ranking: &RankingConfig,
    ) -> Result<Retrieval<T>, PipelineError> {
        let query_vec = self.embedder.embed_one(query)?;
        let candidates = self.index.search(query, &query_vec, hybrid)?;
        let rescore_query = match &self.rescorer {
            Some(r) => r.provider.embed_one(query)?,
            None => query_vec,
        };
        match ranking.strategy {
            RankingStrategy::ChildFirst => {
                ranking.validate()?;
                let rescored = rescore_children(&rescore_query, candidates, self.rescore_vectors())?;
                let ranking = walk_parents(&rescored, ranking.top_n);
                Ok(Retrieval { candidates: rescored, ranking })
            }
            RankingStrategy::ParentRescore => {
                let ranking =
                    rank_parents_with_rescore(&rescore_query, &candidates, ranking, self.rescore_provider(), &self.corpus)?;
                Ok(Retrieval { candidates, ranking })
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let file = File::create(path).map_err(|e| PipelineError::snapshot(path, e))?;
        let mut writer = BufWriter::new(file);
        let snapshot = SnapshotRef {
            format: SNAPSHOT_FORMAT,
            version: SNAPSHOT_VERSION,
            scalar: std::any::type_name::<T>(),
            settings: &self.settings,
            corpus: &self.corpus,
            index: &self.index,
            rescore_vectors: self.rescorer.as_ref().map(|r| &r.chunk_vectors),
        };
        serde_json::to_writer(&mut writer, &snapshot).map_err(|e| PipelineError::snapshot(path, e))?;
        writer.flush().map_err(|e| PipelineError::snapshot(path, e))
    }

    /// Loads a snapshot and rebuilds its providers from the stored settings.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let file = File::open(path).map_err(|e| PipelineError::snapshot(path, e))?;
        let snapshot: SnapshotOwned<T> =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| PipelineError::snapshot(path, e))?;
        if snapshot.format != SNAPSHOT_FORMAT {
            return Err(PipelineError::snapshot(path, format!("not an index snapshot (format {:?})", snapshot.format)));
        }
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(PipelineError::snapshot(
                path,
                format!("unsupported snapshot version {} (expected {SNAPSHOT_VERSION})", snapshot.version),
            ));
        }
        if snapshot.scalar != std::any::type_name::<T>() {
            return Err(PipelineError::snapshot(
                path,
                format!("snapshot scalar {} does not match {}", snapshot.scalar, std::any::type_name::<T>()),
            ));
        }
        let mut corpus = snapshot.corpus;
        corpus.reindex();
        let settings = snapshot.settings;
        let embedder = settings.embedder.build::<T>()?;
        if embedder.dim() != snapshot.index.dense().dim() {
            return Err(IndexError::DimensionMismatch { expected: snapshot.index.dense().dim(), actual: embedder.dim() }.into());
        }
        let rescorer = match (settings.distinct_rescorer(), snapshot.rescore_vectors) {
            (Some(cfg), Some(chunk_vectors)) => Some(Rescorer { provider: cfg.build::<T>()?, chunk_vectors }),
            (None, None) => None,
            _ => return Err(PipelineError::snapshot(path, "rescorer settings and stored vectors disagree")),
        };
        Ok(Self { settings, corpus, index: snapshot.index, embedder, rescorer })
    }
}

#[derive(Serialize)]
struct SnapshotRef<'a, T: Scalar> {
    format: &'a str,
    version: u32,
    scalar: &'a str,
    settings: &'a IndexSettings,
    corpus: &'a Corpus,
    index: &'a HybridIndex<T>,
    rescore_vectors: Option<&'a DenseIndex<T>>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct SnapshotOwned<T> {
    format: String,
    version: u32,
    scalar: String,
    settings: IndexSettings,
    corpus: Corpus,
    index: HybridIndex<T>,
    rescore_vectors: Option<DenseIndex<T>>,
}
