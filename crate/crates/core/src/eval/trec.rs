//! TREC qrels and run files.
//!
//! Qrels lines: `query_id 0 doc_id grade`. Run lines:
//! `query_id Q0 doc_id rank score tag`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::metrics::Judgments;
use super::EvalError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    queries: BTreeMap<String, Judgments>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.queries.entry(query_id.into()).or_default().insert(doc_id.into(), grade);
    }

    pub fn get(&self, query_id: &str) -> Option<&Judgments> {
        self.queries.get(query_id)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Judgments)> {
        self.queries.iter()
    }

    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut qrels = Self::new();
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let [query, _, doc, grade] = fields[..] else {
                return Err(EvalError::parse(i + 1, format!("expected 4 fields, found {}", fields.len())));
            };
            let grade: u32 = grade
                .parse()
                .map_err(|_| EvalError::parse(i + 1, format!("grade {grade:?} is not a non-negative integer")))?;
            qrels.insert(query, doc, grade);
        }
        if qrels.is_empty() {
            return Err(EvalError::parse(0, "qrels contain no judgments"));
        }
        Ok(qrels)
    }

    pub fn read(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?)
    }

    pub fn write(&self, out: &mut (impl Write + ?Sized)) -> io::Result<()> {
        for (query, judgments) in &self.queries {
            for (doc, grade) in judgments {
                writeln!(out, "{query} 0 {doc} {grade}")?;
            }
        }
        Ok(())
    }
}

/// Ranked documents per query. Doc ids are unique and scores non-increasing
/// within each query.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFile<T> {
    queries: BTreeMap<String, Vec<(String, T)>>,
}

impl<T> Default for RunFile<T> {
    fn default() -> Self {
        Self { queries: BTreeMap::new() }
    }
}

impl<T: Scalar> RunFile<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, ranked: Vec<(String, T)>) -> Result<(), EvalError> {
        let query_id = query_id.into();
        let mut seen = std::collections::HashSet::new();
        for (doc, _) in &ranked {
            if !seen.insert(doc.as_str()) {
                return Err(EvalError::DuplicateDocument { query: query_id, doc: doc.clone() });
            }
        }
        if ranked.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(EvalError::Unsorted { query: query_id });
        }
        self.queries.insert(query_id, ranked);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&[(String, T)]> {
        self.queries.get(query_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &String> {
        self.queries.keys()
    }

    /// Parses a run. Within a query, entries are ordered by score descending,
    /// then by the rank column.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut raw: BTreeMap<String, Vec<(usize, String, T)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let [query, _, doc, rank, score, ..] = fields[..] else {
                return Err(EvalError::parse(i + 1, format!("expected 6 fields, found {}", fields.len())));
            };
            let rank: usize = rank
                .parse()
                .map_err(|_| EvalError::parse(i + 1, format!("rank {rank:?} is not an integer")))?;
            let score: f64 = score
                .parse()
                .map_err(|_| EvalError::parse(i + 1, format!("score {score:?} is not a number")))?;
            raw.entry(query.to_string()).or_default().push((rank, doc.to_string(), T::lit(score)));
        }
        let mut run = Self::new();
        for (query, mut entries) in raw {
            entries.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
            run.insert(query, entries.into_iter().map(|(_, d, s)| (d, s)).collect())?;
        }
        Ok(run)
    }

    pub fn read(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?)
    }

    /// Writes the run with 1-based ranks and six-decimal scores.
    pub fn write(&self, out: &mut (impl Write + ?Sized), tag: &str) -> io::Result<()> {
        for (query, ranked) in &self.queries {
            for (rank, (doc, score)) in ranked.iter().enumerate() {
                writeln!(out, "{query} Q0 {doc} {} {score:.6} {tag}", rank + 1)?;
            }
        }
        Ok(())
    }
}
