//! Sparse (BM25) and dense (cosine) indices over child chunks, and their
//! hybrid fusion.
//!
//! Both indices keep chunk ids in ascending order so that ordinals double as
//! the tie-break order and the build order never leaks into results.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ChildChunk;
use crate::embedding::{cosine, EmbeddingError, EmbeddingVector};
use crate::scalar::{desc_then_id, Scalar};
use crate::tokenize::tokenize;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_ALPHA: f64 = 0.7;
pub const DEFAULT_K: usize = 50;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IndexError {
    #[error("chunk {0:?} indexed twice")]
    DuplicateChunk(String),
    #[error("vector dimension mismatch: index has {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{chunks} chunks but {vectors} vectors")]
    LengthMismatch { chunks: usize, vectors: usize },
    #[error("sparse and dense indices cover different chunk sets")]
    ChunkSetMismatch,
    #[error("invalid hybrid config: {0}")]
    InvalidConfig(String),
}

impl From<EmbeddingError> for IndexError {
    fn from(err: EmbeddingError) -> Self {
        match err {
            EmbeddingError::DimensionMismatch { expected, actual } => IndexError::DimensionMismatch { expected, actual },
            other => IndexError::InvalidConfig(other.to_string()),
        }
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, non-negative for `df <= N`.
pub fn bm25_idf<T: Scalar>(n_docs: usize, df: usize) -> T {
    let n = T::lit(n_docs as f64);
    let df = T::lit(df as f64);
    let half = T::lit(0.5);
    (T::one() + (n - df + half) / (df + half)).ln()
}

fn sorted_unique<V>(mut items: Vec<(String, V)>) -> Result<Vec<(String, V)>, IndexError> {
    items.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = items.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IndexError::DuplicateChunk(w[0].0.clone()));
    }
    Ok(items)
}

/// Okapi BM25 over an inverted index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex<T> {
    chunk_ids: Vec<String>,
    /// term -> (chunk ordinal, term frequency), ascending by ordinal.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    doc_lengths: Vec<u32>,
    avgdl: T,
    k1: T,
    b: T,
}

impl<T: Scalar> SparseIndex<T> {
    pub fn build<'a, I>(chunks: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        Self::build_with_params(chunks, T::lit(DEFAULT_K1), T::lit(DEFAULT_B))
    }

    pub fn build_with_params<'a, I>(chunks: I, k1: T, b: T) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let items = sorted_unique(chunks.into_iter().map(|(id, text)| (id.to_string(), text)).collect())?;
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(items.len());
        let mut chunk_ids = Vec::with_capacity(items.len());
        for (ordinal, (id, text)) in items.into_iter().enumerate() {
            let tokens = tokenize(text);
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for token in tokens {
                *tf.entry(token).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((ordinal as u32, count));
            }
            chunk_ids.push(id);
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avgdl = if doc_lengths.is_empty() {
            T::zero()
        } else {
            T::lit(total as f64 / doc_lengths.len() as f64)
        };
        Ok(Self { chunk_ids, postings, doc_lengths, avgdl, k1, b })
    }

    pub fn len(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_ids.is_empty()
    }

    pub fn avgdl(&self) -> T {
        self.avgdl
    }

    pub fn chunk_ids(&self) -> &[String] {
        &self.chunk_ids
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// BM25 search. Each distinct query term contributes once; chunks scoring
    /// zero are omitted. Ties break by ascending chunk id.
    pub fn search(&self, query: &str, limit: usize) -> Vec<(String, T)> {
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        if terms.is_empty() || self.avgdl.is_zero() || limit == 0 {
            return Vec::new();
        }
        let n = self.len();
        let mut scores: HashMap<u32, T> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = bm25_idf::<T>(n, list.len());
            for &(ordinal, tf) in list {
                let tf = T::lit(tf as f64);
                let dl = T::lit(self.doc_lengths[ordinal as usize] as f64);
                let norm = self.k1 * (T::one() - self.b + self.b * dl / self.avgdl);
                let contribution = idf * tf * (self.k1 + T::one()) / (tf + norm);
                let entry = scores.entry(ordinal).or_insert_with(T::zero);
                *entry = *entry + contribution;
            }
        }
        let mut ranked: Vec<(u32, T)> = scores.into_iter().filter(|(_, s)| *s > T::zero()).collect();
        ranked.sort_by(|a, b| desc_then_id((a.1, &self.chunk_ids[a.0 as usize]), (b.1, &self.chunk_ids[b.0 as usize])));
        ranked.truncate(limit);
        ranked
            .into_iter()
            .map(|(ordinal, score)| (self.chunk_ids[ordinal as usize].clone(), score))
            .collect()
    }
}

/// Looks up a stored embedding by id.
pub trait VectorLookup<T> {
    fn vector(&self, id: &str) -> Option<&EmbeddingVector<T>>;
}

impl<T> VectorLookup<T> for HashMap<String, EmbeddingVector<T>> {
    fn vector(&self, id: &str) -> Option<&EmbeddingVector<T>> {
        self.get(id)
    }
}

/// Exact brute-force cosine search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex<T> {
    dim: usize,
    chunk_ids: Vec<String>,
    vectors: Vec<EmbeddingVector<T>>,
}

impl<T: Scalar> DenseIndex<T> {
    pub fn build(dim: usize, entries: Vec<(String, EmbeddingVector<T>)>) -> Result<Self, IndexError> {
        let entries = sorted_unique(entries)?;
        if let Some((_, v)) = entries.iter().find(|(_, v)| v.dim() != dim) {
            return Err(IndexError::DimensionMismatch { expected: dim, actual: v.dim() });
        }
        let (chunk_ids, vectors) = entries.into_iter().unzip();
        Ok(Self { dim, chunk_ids, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_ids.is_empty()
    }

    pub fn chunk_ids(&self) -> &[String] {
        &self.chunk_ids
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector<T>> {
        self.chunk_ids
            .binary_search_by(|probe| probe.as_str().cmp(id))
            .ok()
            .map(|i| &self.vectors[i])
    }

    /// Top-`limit` chunks by cosine, descending, ties by ascending chunk id.
    pub fn search(&self, query: &EmbeddingVector<T>, limit: usize) -> Result<Vec<(String, T)>, IndexError> {
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, actual: query.dim() });
        }
        let mut scored: Vec<(usize, T)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| cosine(query, v).map(|s| (i, s)))
            .collect::<Result<_, _>>()?;
        scored.sort_by(|a, b| desc_then_id((a.1, &self.chunk_ids[a.0]), (b.1, &self.chunk_ids[b.0])));
        scored.truncate(limit);
        Ok(scored
            .into_iter()
            .map(|(i, s)| (self.chunk_ids[i].clone(), s))
            .collect())
    }
}

impl<T: Scalar> VectorLookup<T> for DenseIndex<T> {
    fn vector(&self, id: &str) -> Option<&EmbeddingVector<T>> {
        self.get(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig<T> {
    /// Weight of the dense leg; `1 - alpha` goes to the sparse leg.
    pub alpha: T,
    /// Candidates taken from each leg, and the fused list length.
    pub k: usize,
}

impl<T: Scalar> Default for HybridConfig<T> {
    fn default() -> Self {
        Self { alpha: T::lit(DEFAULT_ALPHA), k: DEFAULT_K }
    }
}

impl<T: Scalar> HybridConfig<T> {
    pub fn new(alpha: T, k: usize) -> Result<Self, IndexError> {
        let cfg = Self { alpha, k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if !(self.alpha >= T::zero() && self.alpha <= T::one()) {
            return Err(IndexError::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.k == 0 {
            return Err(IndexError::InvalidConfig("k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Min-max normalization to `[0, 1]`; an all-equal list maps to all `1`.
pub fn min_max_normalize<T: Scalar>(scores: &[T]) -> Vec<T> {
    let Some(&first) = scores.first() else { return Vec::new() };
    let (min, max) = scores.iter().fold((first, first), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let range = max - min;
    if range <= T::zero() {
        return vec![T::one(); scores.len()];
    }
    scores
        .iter()
        .map(|&s| ((s - min) / range).max(T::zero()).min(T::one()))
        .collect()
}

/// One chunk after hybrid fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedScore<T> {
    pub chunk_id: String,
    /// Raw BM25 score, when the chunk came back from the sparse leg.
    pub sparse_score: Option<T>,
    /// Raw cosine, when the chunk came back from the dense leg.
    pub dense_score: Option<T>,
    pub sparse_norm: T,
    pub dense_norm: T,
    pub fused_score: T,
}

/// Relative score fusion of two ranked legs.
///
/// Each leg is min-max normalized over its own candidates, a candidate absent
/// from a leg gets `0` there, and `fused = alpha * dense + (1 - alpha) * sparse`.
/// Output is sorted by fused score descending (ties by chunk id) and cut to
/// `limit`.
pub fn fuse<T: Scalar>(dense: &[(String, T)], sparse: &[(String, T)], alpha: T, limit: usize) -> Vec<FusedScore<T>> {
    let mut merged: HashMap<&str, FusedScore<T>> = HashMap::new();
    let blank = |id: &str| FusedScore {
        chunk_id: id.to_string(),
        sparse_score: None,
        dense_score: None,
        sparse_norm: T::zero(),
        dense_norm: T::zero(),
        fused_score: T::zero(),
    };
    let dense_norm = min_max_normalize(&dense.iter().map(|(_, s)| *s).collect::<Vec<_>>());
    for ((id, raw), norm) in dense.iter().zip(dense_norm) {
        let entry = merged.entry(id).or_insert_with(|| blank(id));
        entry.dense_score = Some(*raw);
        entry.dense_norm = norm;
    }
    let sparse_norm = min_max_normalize(&sparse.iter().map(|(_, s)| *s).collect::<Vec<_>>());
    for ((id, raw), norm) in sparse.iter().zip(sparse_norm) {
        let entry = merged.entry(id).or_insert_with(|| blank(id));
        entry.sparse_score = Some(*raw);
        entry.sparse_norm = norm;
    }
    let mut fused: Vec<FusedScore<T>> = merged
        .into_values()
        .map(|mut f| {
            let score = alpha * f.dense_norm + (T::one() - alpha) * f.sparse_norm;
            f.fused_score = score.max(T::zero()).min(T::one());
            f
        })
        .collect();
    fused.sort_by(|a, b| desc_then_id((a.fused_score, &a.chunk_id), (b.fused_score, &b.chunk_id)));
    fused.truncate(limit);
    fused
}

/// A retrieved child chunk carrying every score the pipeline assigns it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate<T> {
    pub chunk_id: String,
    pub parent_id: String,
    pub sparse_score: Option<T>,
    pub dense_score: Option<T>,
    pub sparse_norm: T,
    pub dense_norm: T,
    pub fused_score: T,
    pub rescored_score: Option<T>,
}

impl<T: Scalar> ScoredCandidate<T> {
    pub fn from_fused(fused: FusedScore<T>, parent_id: String) -> Self {
        Self {
            chunk_id: fused.chunk_id,
            parent_id,
            sparse_score: fused.sparse_score,
            dense_score: fused.dense_score,
            sparse_norm: fused.sparse_norm,
            dense_norm: fused.dense_norm,
            fused_score: fused.fused_score,
            rescored_score: None,
        }
    }

    /// The score used for parent aggregation: rescored when available.
    pub fn effective_score(&self) -> T {
        self.rescored_score.unwrap_or(self.fused_score)
    }
}

/// Sparse and dense indices over one chunk set, with child-to-parent links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridIndex<T> {
    sparse: SparseIndex<T>,
    dense: DenseIndex<T>,
    parent_of: BTreeMap<String, String>,
}

impl<T: Scalar> HybridIndex<T> {
    /// `vectors[i]` must be the embedding of `chunks[i]`.
    pub fn build(chunks: &[ChildChunk], vectors: Vec<EmbeddingVector<T>>, dim: usize) -> Result<Self, IndexError> {
        if chunks.len() != vectors.len() {
            return Err(IndexError::LengthMismatch { chunks: chunks.len(), vectors: vectors.len() });
        }
        let sparse = SparseIndex::build(chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())))?;
        let dense = DenseIndex::build(
            dim,
            chunks.iter().map(|c| c.chunk_id.clone()).zip(vectors).collect(),
        )?;
        let parent_of = chunks
            .iter()
            .map(|c| (c.chunk_id.clone(), c.parent_id.clone()))
            .collect();
        Self::from_parts(sparse, dense, parent_of)
    }

    pub fn from_parts(
        sparse: SparseIndex<T>,
        dense: DenseIndex<T>,
        parent_of: BTreeMap<String, String>,
    ) -> Result<Self, IndexError> {
        if sparse.chunk_ids() != dense.chunk_ids()
            || parent_of.len() != sparse.len()
            || !parent_of.keys().eq(sparse.chunk_ids().iter())
        {
            return Err(IndexError::ChunkSetMismatch);
        }
        Ok(Self { sparse, dense, parent_of })
    }

    pub fn sparse(&self) -> &SparseIndex<T> {
        &self.sparse
    }

    pub fn dense(&self) -> &DenseIndex<T> {
        &self.dense
    }

    pub fn parent_of(&self, chunk_id: &str) -> Option<&str> {
        self.parent_of.get(chunk_id).map(String::as_str)
    }

    /// Hybrid search: top-k from each leg, fused, cut to k.
    ///
    /// A zero query vector carries no semantic signal, so the dense leg is
    /// skipped for it; a query without tokens likewise empties the sparse leg.
    pub fn search(
        &self,
        query: &str,
        query_vec: &EmbeddingVector<T>,
        config: &HybridConfig<T>,
    ) -> Result<Vec<ScoredCandidate<T>>, IndexError> {
        config.validate()?;
        let dense = if query_vec.is_zero() {
            if query_vec.dim() != self.dense.dim() {
                return Err(IndexError::DimensionMismatch { expected: self.dense.dim(), actual: query_vec.dim() });
            }
            Vec::new()
        } else {
            self.dense.search(query_vec, config.k)?
        };
        let sparse = self.sparse.search(query, config.k);
        Ok(fuse(&dense, &sparse, config.alpha, config.k)
            .into_iter()
            .map(|f| {
                let parent = self.parent_of[&f.chunk_id].clone();
                ScoredCandidate::from_fused(f, parent)
            })
            .collect())
    }
}
