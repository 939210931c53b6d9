//! Retrieval evaluation: graded-relevance metrics, TREC file formats, run
//! scoring, and configuration sweeps.

pub mod metrics;
pub mod sweep;
pub mod trec;

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::ranking::RankingStrategy;
use crate::scalar::Scalar;

pub use metrics::{ndcg_at_k, recall_at_k, Gain, Judgments};
pub use sweep::{run_sweep, write_sweep_csv, SweepGrid, SweepRow, SWEEP_HEADER};
pub use trec::{Qrels, RunFile};

pub const DEFAULT_CUTOFFS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("query {query}: document {doc} appears more than once")]
    DuplicateDocument { query: String, doc: String },
    #[error("query {query}: scores are not in descending order")]
    Unsorted { query: String },
    #[error("run and qrels share no query ids")]
    NoSharedQueries,
    #[error("cutoffs must be non-empty and >= 1")]
    InvalidCutoffs,
}

impl EvalError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Self::Parse { line, message: message.into() }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

/// Retrieval settings a report was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub alpha: f64,
    pub strategy: RankingStrategy,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryMetrics<T> {
    pub query_id: String,
    /// False when the query is judged but absent from the run.
    pub in_run: bool,
    /// Aligned with [`EvalReport::cutoffs`].
    pub ndcg: Vec<T>,
    pub recall: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport<T> {
    pub cutoffs: Vec<usize>,
    /// One entry per qrels query, in query id order.
    pub per_query: Vec<QueryMetrics<T>>,
    pub mean_ndcg: Vec<T>,
    pub mean_recall: Vec<T>,
    /// Qrels queries with no run entry; they score 0.
    pub missing_from_run: usize,
    /// Run queries with no judgments; they are ignored.
    pub unjudged_queries: usize,
    pub config: Option<ConfigEcho>,
}

impl<T: Scalar> EvalReport<T> {
    fn position(&self, k: usize) -> Option<usize> {
        self.cutoffs.iter().position(|&c| c == k)
    }

    pub fn mean_ndcg_at(&self, k: usize) -> Option<T> {
        self.position(k).map(|i| self.mean_ndcg[i])
    }

    pub fn mean_recall_at(&self, k: usize) -> Option<T> {
        self.position(k).map(|i| self.mean_recall[i])
    }
}

/// Scores `run` against `qrels`. Means are taken over every qrels query.
pub fn evaluate_run<T: Scalar>(
    run: &RunFile<T>,
    qrels: &Qrels,
    cutoffs: &[usize],
    gain: Gain,
) -> Result<EvalReport<T>, EvalError> {
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(EvalError::InvalidCutoffs);
    }
    if !qrels.iter().any(|(q, _)| run.get(q).is_some()) {
        return Err(EvalError::NoSharedQueries);
    }
    let mut per_query = Vec::with_capacity(qrels.len());
    let mut missing_from_run = 0;
    for (query_id, judgments) in qrels.iter() {
        let ranking: Vec<&str> = match run.get(query_id) {
            Some(ranked) => ranked.iter().map(|(d, _)| d.as_str()).collect(),
            None => {
                missing_from_run += 1;
                Vec::new()
            }
        };
        per_query.push(QueryMetrics {
            query_id: query_id.clone(),
            in_run: run.get(query_id).is_some(),
            ndcg: cutoffs.iter().map(|&k| ndcg_at_k(&ranking, judgments, k, gain)).collect(),
            recall: cutoffs.iter().map(|&k| recall_at_k(&ranking, judgments, k)).collect(),
        });
    }
    let n = T::lit(per_query.len() as f64);
    let mean = |pick: fn(&QueryMetrics<T>) -> &Vec<T>| -> Vec<T> {
        (0..cutoffs.len())
            .map(|i| per_query.iter().map(|m| pick(m)[i]).sum::<T>() / n)
            .collect()
    };
    let mean_ndcg = mean(|m| &m.ndcg);
    let mean_recall = mean(|m| &m.recall);
    let unjudged_queries = run.query_ids().filter(|q| qrels.get(q).is_none()).count();
    Ok(EvalReport {
        cutoffs: cutoffs.to_vec(),
        per_query,
        mean_ndcg,
        mean_recall,
        missing_from_run,
        unjudged_queries,
        config: None,
    })
}

/// Builds a run from ranked (doc id, score) lists keyed by query id.
pub fn run_from_rankings<T: Scalar>(
    rankings: impl IntoIterator<Item = (String, Vec<(String, T)>)>,
) -> Result<RunFile<T>, EvalError> {
    let mut run = RunFile::new();
    for (query, ranked) in rankings {
        run.insert(query, ranked)?;
    }
    Ok(run)
}

/// Parses a `query_id<TAB>text` file; blank lines are skipped.
pub fn parse_queries_tsv(text: &str) -> Result<Vec<(String, String)>, EvalError> {
    let mut queries = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, query)) = line.split_once('\t') else {
            return Err(EvalError::parse(i + 1, "expected query_id<TAB>text"));
        };
        let (id, query) = (id.trim(), query.trim());
        if id.is_empty() || query.is_empty() {
            return Err(EvalError::parse(i + 1, "empty query id or text"));
        }
        if seen.insert(id.to_string(), i + 1).is_some() {
            return Err(EvalError::parse(i + 1, format!("duplicate query id {id}")));
        }
        queries.push((id.to_string(), query.to_string()));
    }
    Ok(queries)
}

pub fn read_queries_tsv(path: &Path) -> Result<Vec<(String, String)>, EvalError> {
    parse_queries_tsv(&std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qrels() -> Qrels {
        Qrels::parse("q1 0 a 1\nq1 0 c 1\nq2 0 b 2\nq2 0 x 0\n").unwrap()
    }

    #[test]
    fn ideal_run_scores_one() {
        let run = run_from_rankings([
            ("q1".to_string(), vec![("a".to_string(), 2.0), ("c".to_string(), 1.0)]),
            ("q2".to_string(), vec![("b".to_string(), 1.0)]),
        ])
        .unwrap();
        let report = evaluate_run::<f64>(&run, &qrels(), &DEFAULT_CUTOFFS, Gain::default()).unwrap();
        assert!(report.mean_ndcg.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert_eq!(report.mean_recall_at(5), Some(1.0));
        assert_eq!(report.mean_recall_at(1), Some(0.75));
    }

    #[test]
    fn missing_queries_score_zero_and_extra_are_counted() {
        let run = run_from_rankings([
            ("q1".to_string(), vec![("a".to_string(), 2.0), ("c".to_string(), 1.0)]),
            ("q9".to_string(), vec![("a".to_string(), 1.0)]),
        ])
        .unwrap();
        let report = evaluate_run::<f64>(&run, &qrels(), &DEFAULT_CUTOFFS, Gain::default()).unwrap();
        assert_eq!(report.missing_from_run, 1);
        assert_eq!(report.unjudged_queries, 1);
        assert_eq!(report.mean_ndcg_at(5), Some(0.5));
        assert!(!report.per_query[1].in_run);
    }

    #[test]
    fn no_shared_queries_is_an_error() {
        let run = run_from_rankings([("zz".to_string(), vec![("a".to_string(), 1.0)])]).unwrap();
        assert!(matches!(
            evaluate_run::<f64>(&run, &qrels(), &DEFAULT_CUTOFFS, Gain::default()),
            Err(EvalError::NoSharedQueries)
        ));
        assert!(matches!(
            evaluate_run::<f64>(&run, &qrels(), &[0], Gain::default()),
            Err(EvalError::InvalidCutoffs)
        ));
    }

    #[test]
    fn queries_tsv() {
        let q = parse_queries_tsv("q1\thello world\n\nq2\tsecond\n").unwrap();
        assert_eq!(q, [("q1".into(), "hello world".into()), ("q2".into(), "second".into())]);
        assert!(parse_queries_tsv("q1 no tab").is_err());
        assert!(parse_queries_tsv("q1\ta\nq1\tb").is_err());
    }
}
