//! Hierarchical parent-child retrieval-augmented generation.
//!
//! Documents are split into overlapping sentence-window child chunks while the
//! full text is kept as the parent. Queries run a hybrid BM25 + dense search
//! over children, rescore them by embedding cosine, aggregate to parents by
//! max child score, and hand the top parents to a text generator. The [`eval`]
//! module scores TREC-style runs and sweeps retrieval configurations.
//!
//! Scoring code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to [`Real`].

pub mod conversation;
pub mod corpus;
pub mod embedding;
pub mod eval;
mod http;
pub mod index;
pub mod pipeline;
pub mod ranking;
pub mod scalar;
pub mod tokenize;

pub use corpus::{ChildChunk, ChunkingConfig, Corpus, CorpusError, CorpusStats, Document, SentenceSpan};
pub use embedding::{cosine, Embedder, EmbeddingError, EmbeddingProviderConfig, HashingEmbedder};
pub use index::IndexError;
pub use pipeline::{IndexSettings, PipelineError};
pub use ranking::{RankingConfig, RankingError, RankingStrategy};
pub use scalar::Scalar;

/// `error: cause: cause ...` on one line.
pub(crate) fn error_chain(err: &dyn std::error::Error) -> String {
    let mut out = err.to_string();
    let mut source = err.source();
    while let Some(cause) = source {
        out.push_str(": ");
        out.push_str(&cause.to_string());
        source = cause.source();
    }
    out
}

/// Default scalar for the concrete aliases below.
pub type Real = f64;

pub type Embedding = embedding::EmbeddingVector<Real>;
pub type Embedding32 = embedding::EmbeddingVector<f32>;
pub type HybridConfig = index::HybridConfig<Real>;
pub type Candidate = index::ScoredCandidate<Real>;
pub type SparseIndex = index::SparseIndex<Real>;
pub type DenseIndex = index::DenseIndex<Real>;
pub type HybridIndex = index::HybridIndex<Real>;
pub type ParentRanking = ranking::ParentRanking<Real>;
pub type Retriever = pipeline::Retriever<Real>;
pub type Retriever32 = pipeline::Retriever<f32>;
pub type Retrieval = pipeline::Retrieval<Real>;
pub type RunFile = eval::RunFile<Real>;
pub type EvalReport = eval::EvalReport<Real>;
pub type SweepRow = eval::SweepRow<Real>;
