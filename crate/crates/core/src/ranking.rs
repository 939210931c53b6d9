//! Child rescoring, max aggregation to parents, and the two parent ranking
//! strategies.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::embedding::{cosine, Embedder, EmbeddingError, EmbeddingVector};
use crate::index::{ScoredCandidate, VectorLookup};
use crate::scalar::{desc_then_id, Scalar};

pub const DEFAULT_TOP_N: usize = 5;
pub const DEFAULT_PARENT_CHAR_BUDGET: usize = 6000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RankingError {
    #[error("no embedding stored for chunk {0:?}")]
    MissingChunkEmbedding(String),
    #[error("parent document {0:?} not found")]
    MissingParent(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid ranking config: {0}")]
    InvalidConfig(String),
}

impl RankingError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, RankingError::Embedding(e) if e.is_retryable())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingStrategy {
    /// Rescore children, then keep each parent's best child.
    #[default]
    ChildFirst,
    /// Re-embed candidate parents' full text and score them directly.
    ParentRescore,
}

impl RankingStrategy {
    /// Value of the `rank_parents` column in sweep tables.
    pub fn rank_parents(self) -> bool {
        matches!(self, RankingStrategy::ParentRescore)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RankingStrategy::ChildFirst => "child_first",
            RankingStrategy::ParentRescore => "parent_rescore",
        }
    }
}

impl std::str::FromStr for RankingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "child_first" | "child-first" | "false" => Ok(RankingStrategy::ChildFirst),
            "parent_rescore" | "parent-rescore" | "true" => Ok(RankingStrategy::ParentRescore),
            other => Err(format!("unknown ranking strategy {other:?} (expected child_first or parent_rescore)")),
        }
    }
}

impl std::fmt::Display for RankingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingConfig {
    pub strategy: RankingStrategy,
    pub top_n: usize,
    /// Parent text is cut to this many characters before re-embedding.
    pub parent_char_budget: usize,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            strategy: RankingStrategy::ChildFirst,
            top_n: DEFAULT_TOP_N,
            parent_char_budget: DEFAULT_PARENT_CHAR_BUDGET,
        }
    }
}

impl RankingConfig {
    pub fn validate(&self) -> Result<(), RankingError> {
        if self.top_n == 0 {
            return Err(RankingError::InvalidConfig("top_n must be >= 1".into()));
        }
        if self.parent_char_budget == 0 {
            return Err(RankingError::InvalidConfig("parent_char_budget must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedParent<T> {
    pub parent_id: String,
    pub score: T,
    /// Candidate chunks of this parent, in candidate order.
    pub chunk_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentRanking<T> {
    pub parents: Vec<RankedParent<T>>,
}

impl<T> ParentRanking<T> {
    pub fn doc_ids(&self) -> Vec<String> {
        self.parents.iter().map(|p| p.parent_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }
}

/// Source of full parent text for parent-level rescoring.
pub trait ParentStore {
    fn parent_text(&self, parent_id: &str) -> Option<&str>;
}

impl ParentStore for HashMap<String, String> {
    fn parent_text(&self, parent_id: &str) -> Option<&str> {
        self.get(parent_id).map(String::as_str)
    }
}

/// Sets `rescored_score` to the cosine against each chunk's stored embedding
/// and re-sorts by it (ties by chunk id).
pub fn rescore_children<T: Scalar>(
    query_vec: &EmbeddingVector<T>,
    mut candidates: Vec<ScoredCandidate<T>>,
    vectors: &dyn VectorLookup<T>,
) -> Result<Vec<ScoredCandidate<T>>, RankingError> {
    for candidate in &mut candidates {
        let chunk_vec = vectors
            .vector(&candidate.chunk_id)
            .ok_or_else(|| RankingError::MissingChunkEmbedding(candidate.chunk_id.clone()))?;
        candidate.rescored_score = Some(cosine(query_vec, chunk_vec)?);
    }
    candidates.sort_by(|a, b| desc_then_id((a.effective_score(), &a.chunk_id), (b.effective_score(), &b.chunk_id)));
    Ok(candidates)
}

/// Best child per parent: `parent_id -> (max score, argmax chunk id)`.
/// Equal scores resolve to the lower chunk id.
pub fn aggregate_max<T: Scalar>(candidates: &[ScoredCandidate<T>]) -> BTreeMap<String, (T, String)> {
    let mut best: BTreeMap<String, (T, String)> = BTreeMap::new();
    for c in candidates {
        let score = c.effective_score();
        match best.get_mut(&c.parent_id) {
            Some(current) => {
                if desc_then_id((score, &c.chunk_id), (current.0, &current.1)).is_lt() {
                    *current = (score, c.chunk_id.clone());
                }
            }
            None => {
                best.insert(c.parent_id.clone(), (score, c.chunk_id.clone()));
            }
        }
    }
    best
}

fn contributing_chunks<T>(candidates: &[ScoredCandidate<T>]) -> HashMap<&str, Vec<String>> {
    let mut map: HashMap<&str, Vec<String>> = HashMap::new();
    for c in candidates {
        map.entry(c.parent_id.as_str()).or_default().push(c.chunk_id.clone());
    }
    map
}

/// Child-first strategy: rescore children, then walk the sorted list emitting
/// each parent at its first (best) child until `top_n` parents are found.
///
/// Equivalent to sorting [`aggregate_max`] by score descending, breaking ties
/// by the argmax chunk id.
pub fn rank_parents_child_first<T: Scalar>(
    query_vec: &EmbeddingVector<T>,
    candidates: Vec<ScoredCandidate<T>>,
    config: &RankingConfig,
    vectors: &dyn VectorLookup<T>,
) -> Result<ParentRanking<T>, RankingError> {
    config.validate()?;
    let sorted = rescore_children(query_vec, candidates, vectors)?;
    Ok(walk_parents(&sorted, config.top_n))
}

/// First-occurrence walk over children already sorted best-first.
pub fn walk_parents<T: Scalar>(sorted: &[ScoredCandidate<T>], top_n: usize) -> ParentRanking<T> {
    let mut chunks = contributing_chunks(sorted);
    let mut parents: Vec<RankedParent<T>> = Vec::new();
    for c in sorted {
        if parents.len() == top_n {
            break;
        }
        if let Some(chunk_ids) = chunks.remove(c.parent_id.as_str()) {
            parents.push(RankedParent {
                parent_id: c.parent_id.clone(),
                score: c.effective_score(),
                chunk_ids,
            });
        }
    }
    ParentRanking { parents }
}

fn truncate_chars(text: &str, budget: usize) -> &str {
    match text.char_indices().nth(budget) {
        Some((cut, _)) => &text[..cut],
        None => text,
    }
}

/// Parent-rescore strategy: embed every distinct candidate parent's full
/// text with the rescorer and rank parents by cosine to the query (ties by
/// parent id).
pub fn rank_parents_with_rescore<T: Scalar>(
    query_vec: &EmbeddingVector<T>,
    candidates: &[ScoredCandidate<T>],
    config: &RankingConfig,
    rescorer: &dyn Embedder<T>,
    store: &dyn ParentStore,
) -> Result<ParentRanking<T>, RankingError> {
    config.validate()?;
    let mut chunks = contributing_chunks(candidates);
    let mut parent_ids: Vec<&str> = chunks.keys().copied().collect();
    if parent_ids.is_empty() {
        return Ok(ParentRanking { parents: Vec::new() });
    }
    parent_ids.sort_unstable();

    let texts = parent_ids
        .iter()
        .map(|&id| {
            let text = store.parent_text(id).ok_or_else(|| RankingError::MissingParent(id.to_string()))?;
            let cut = truncate_chars(text, config.parent_char_budget);
            if cut.len() < text.len() {
                warn!(parent = id, budget = config.parent_char_budget, "parent text truncated before embedding");
            }
            Ok(cut)
        })
        .collect::<Result<Vec<&str>, RankingError>>()?;
    let vectors = rescorer.embed(&texts)?;
    if vectors.len() != parent_ids.len() {
        return Err(RankingError::Embedding(EmbeddingError::BadResponse(format!(
            "expected {} parent vectors, got {}",
            parent_ids.len(),
            vectors.len()
        ))));
    }

    let mut scored: Vec<(&str, T)> = parent_ids
        .iter()
        .zip(&vectors)
        .map(|(&id, v)| cosine(query_vec, v).map(|s| (id, s)))
        .collect::<Result<_, _>>()?;
    scored.sort_by(|a, b| desc_then_id((a.1, a.0), (b.1, b.0)));
    scored.truncate(config.top_n);

    let parents = scored
        .into_iter()
        .map(|(id, score)| RankedParent {
            parent_id: id.to_string(),
            score,
            chunk_ids: chunks.remove(id).unwrap_or_default(),
        })
        .collect();
    Ok(ParentRanking { parents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEmbedder;

    fn cand(chunk: &str, parent: &str, fused: f64) -> ScoredCandidate<f64> {
        ScoredCandidate {
            chunk_id: chunk.into(),
            parent_id: parent.into(),
            sparse_score: None,
            dense_score: None,
            sparse_norm: 0.0,
            dense_norm: 0.0,
            fused_score: fused,
            rescored_score: None,
        }
    }

    fn rescored(chunk: &str, parent: &str, score: f64) -> ScoredCandidate<f64> {
        ScoredCandidate { rescored_score: Some(score), ..cand(chunk, parent, 0.0) }
    }

    fn v(x: f64, y: f64) -> EmbeddingVector<f64> {
        EmbeddingVector::new(vec![x, y])
    }

    fn lookup(entries: &[(&str, EmbeddingVector<f64>)]) -> HashMap<String, EmbeddingVector<f64>> {
        entries.iter().map(|(id, v)| (id.to_string(), v.clone())).collect()
    }

    #[test]
    fn rescoring_singleton_populates_score() {
        let vectors = lookup(&[("c1", v(1.0, 0.0))]);
        let out = rescore_children(&v(1.0, 0.0), vec![cand("c1", "p", 0.3)], &vectors).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].rescored_score.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_order_overrides_fused_order() {
        // c1 wins on fused score, c2 is closer to the query.
        let vectors = lookup(&[("c1", v(0.0, 1.0)), ("c2", v(1.0, 0.1))]);
        let out = rescore_children(&v(1.0, 0.0), vec![cand("c1", "p", 0.9), cand("c2", "p", 0.1)], &vectors).unwrap();
        assert_eq!(out[0].chunk_id, "c2");
        assert_eq!(out[1].chunk_id, "c1");
    }

    #[test]
    fn equal_rescores_sort_by_chunk_id() {
        let vectors = lookup(&[("b", v(1.0, 0.0)), ("a", v(2.0, 0.0)), ("c", v(3.0, 0.0))]);
        let out = rescore_children(&v(1.0, 0.0), vec![cand("c", "p", 0.9), cand("b", "p", 0.5), cand("a", "p", 0.1)], &vectors).unwrap();
        let ids: Vec<_> = out.iter().map(|c| c.chunk_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn missing_chunk_embedding_is_named() {
        let err = rescore_children(&v(1.0, 0.0), vec![cand("ghost", "p", 0.5)], &lookup(&[])).unwrap_err();
        assert_eq!(err, RankingError::MissingChunkEmbedding("ghost".into()));
    }

    #[test]
    fn aggregate_takes_max_per_parent() {
        let agg = aggregate_max(&[rescored("a", "p1", 0.9), rescored("b", "p1", 0.2), rescored("c", "p2", 0.7)]);
        assert_eq!(agg["p1"], (0.9, "a".to_string()));
        assert_eq!(agg["p2"], (0.7, "c".to_string()));
    }

    #[test]
    fn aggregate_without_rescore_uses_fused() {
        let agg = aggregate_max(&[cand("a", "p1", 0.4), cand("b", "p2", 0.6)]);
        assert_eq!(agg["p1"].0, 0.4);
        assert_eq!(agg["p2"].0, 0.6);
    }

    #[test]
    fn aggregate_tie_prefers_lower_chunk_id() {
        let agg = aggregate_max(&[rescored("p#4", "p", 0.5), rescored("p#2", "p", 0.5)]);
        assert_eq!(agg["p"].1, "p#2");
    }

    #[test]
    fn walk_dedupes_parents() {
        let sorted = [rescored("c1", "pA", 0.9), rescored("c2", "pA", 0.8), rescored("c3", "pB", 0.6)];
        let ranking = walk_parents(&sorted, 2);
        assert_eq!(ranking.doc_ids(), ["pA", "pB"]);
        assert_eq!(ranking.parents[0].score, 0.9);
        assert_eq!(ranking.parents[0].chunk_ids, ["c1", "c2"]);
        assert_eq!(ranking.parents[1].score, 0.6);
        assert_eq!(walk_parents(&sorted, 10).len(), 2);
        assert!(walk_parents::<f64>(&[], 5).is_empty());
    }

    #[test]
    fn child_first_end_to_end() {
        let vectors = lookup(&[("a#0", v(1.0, 0.0)), ("a#2", v(0.0, 1.0)), ("b#0", v(1.0, 1.0))]);
        let candidates = vec![cand("a#2", "a", 0.9), cand("b#0", "b", 0.8), cand("a#0", "a", 0.1)];
        let ranking = rank_parents_child_first(&v(1.0, 0.0), candidates, &RankingConfig::default(), &vectors).unwrap();
        assert_eq!(ranking.doc_ids(), ["a", "b"]);
        assert!((ranking.parents[0].score - 1.0).abs() < 1e-12);
        assert!(rank_parents_child_first(&v(1.0, 0.0), Vec::new(), &RankingConfig::default(), &vectors)
            .unwrap()
            .is_empty());
    }

    fn store(entries: &[(&str, &str)]) -> HashMap<String, String> {
        entries.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn parent_rescore_singleton() {
        let embedder = HashingEmbedder::default();
        let docs = store(&[("p", "Rust borrow checker rules.")]);
        let q: EmbeddingVector<f64> = embedder.embed_text("borrow checker");
        let candidates = [cand("p#0", "p", 0.5), cand("p#2", "p", 0.4)];
        let ranking = rank_parents_with_rescore(&q, &candidates, &RankingConfig::default(), &embedder, &docs).unwrap();
        assert_eq!(ranking.doc_ids(), ["p"]);
        let expected = cosine(&q, &embedder.embed_text("Rust borrow checker rules.")).unwrap();
        assert_eq!(ranking.parents[0].score, expected);
        assert_eq!(ranking.parents[0].chunk_ids, ["p#0", "p#2"]);
    }

    #[test]
    fn parent_rescore_can_invert_child_order() {
        let embedder = HashingEmbedder::default();
        // pA's best child is strong, but its full text drifts off topic.
        let docs = store(&[
            ("pA", "volcano eruption. lunch menu pasta salad soup bread cheese wine dessert"),
            ("pB", "volcano eruption lava magma volcano eruption"),
        ]);
        let q: EmbeddingVector<f64> = embedder.embed_text("volcano eruption");
        let candidates = [cand("pA#0", "pA", 0.9), cand("pB#0", "pB", 0.2)];
        let child_first = walk_parents(&candidates, 5);
        assert_eq!(child_first.doc_ids(), ["pA", "pB"]);
        let ranking = rank_parents_with_rescore(&q, &candidates, &RankingConfig::default(), &embedder, &docs).unwrap();
        assert_eq!(ranking.doc_ids(), ["pB", "pA"]);
    }

    #[test]
    fn parent_rescore_missing_parent_errors() {
        let embedder = HashingEmbedder::default();
        let q: EmbeddingVector<f64> = embedder.embed_text("x");
        let err = rank_parents_with_rescore(&q, &[cand("z#0", "z", 0.1)], &RankingConfig::default(), &embedder, &store(&[]))
            .unwrap_err();
        assert_eq!(err, RankingError::MissingParent("z".into()));
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        assert_eq!(truncate_chars("héllo", 2), "hé");
        assert_eq!(truncate_chars("abc", 10), "abc");
    }

    #[test]
    fn strategy_parsing_and_flag() {
        assert_eq!("child_first".parse::<RankingStrategy>().unwrap(), RankingStrategy::ChildFirst);
        assert_eq!("true".parse::<RankingStrategy>().unwrap(), RankingStrategy::ParentRescore);
        assert!("sideways".parse::<RankingStrategy>().is_err());
        assert!(RankingStrategy::ParentRescore.rank_parents());
        assert!(!RankingStrategy::ChildFirst.rank_parents());
        assert!(RankingConfig { top_n: 0, ..Default::default() }.validate().is_err());
    }
}
