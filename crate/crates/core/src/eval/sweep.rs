//! Grid sweep over hybrid weight, ranking strategy and candidate pool size.

use std::io::{self, Write};

use rayon::prelude::*;

use super::{evaluate_run, ConfigEcho, EvalReport, Gain, Qrels, RunFile, DEFAULT_CUTOFFS};
use crate::index::HybridConfig;
use crate::pipeline::Retriever;
use crate::ranking::{RankingConfig, RankingStrategy};
use crate::scalar::Scalar;

pub const SWEEP_HEADER: &str = "alpha,rank_parents,k,ndcg@1,ndcg@3,ndcg@5,recall@1,recall@3,recall@5,best,error";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub strategies: Vec<RankingStrategy>,
    pub ks: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            alphas: vec![0.5, 0.7, 0.9],
            strategies: vec![RankingStrategy::ParentRescore, RankingStrategy::ChildFirst],
            ks: vec![20, 30, 50],
        }
    }
}

impl SweepGrid {
    /// Configurations in output order: strategy, then alpha, then k.
    pub fn configurations(&self) -> Vec<ConfigEcho> {
        let mut out = Vec::with_capacity(self.len());
        for &strategy in &self.strategies {
            for &alpha in &self.alphas {
                for &k in &self.ks {
                    out.push(ConfigEcho { alpha, strategy, k });
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.alphas.len() * self.strategies.len() * self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub config: ConfigEcho,
    /// The report, or the message of the error that stopped this row.
    pub outcome: Result<EvalReport<T>, String>,
    /// Highest mean nDCG@5 of the sweep; the earliest row wins ties.
    pub best: bool,
}

fn evaluate_config<T: Scalar>(
    retriever: &Retriever<T>,
    queries: &[(String, String)],
    qrels: &Qrels,
    config: ConfigEcho,
    base: &RankingConfig,
    gain: Gain,
) -> Result<EvalReport<T>, String> {
    let hybrid = HybridConfig::new(T::lit(config.alpha), config.k).map_err(|e| e.to_string())?;
    let ranking = RankingConfig { strategy: config.strategy, ..*base };
    let mut run = RunFile::new();
    for (query_id, text) in queries {
        let retrieval = retriever.retrieve(text, &hybrid, &ranking).map_err(|e| format!("query {query_id}: {}", crate::error_chain(&e)))?;
        let ranked = retrieval.ranking.parents.into_iter().map(|p| (p.parent_id, p.score)).collect();
        run.insert(query_id.clone(), ranked).map_err(|e| e.to_string())?;
    }
    let mut report = evaluate_run(&run, qrels, &DEFAULT_CUTOFFS, gain).map_err(|e| e.to_string())?;
    report.config = Some(config);
    Ok(report)
}

/// Evaluates every grid configuration over `queries`. Rows run in parallel
/// but are returned in grid order; a failing row records its error and the
/// sweep continues.
pub fn run_sweep<T: Scalar>(
    retriever: &Retriever<T>,
    queries: &[(String, String)],
    qrels: &Qrels,
    grid: &SweepGrid,
    base: &RankingConfig,
    gain: Gain,
) -> Vec<SweepRow<T>> {
    let mut rows: Vec<SweepRow<T>> = grid
        .configurations()
        .into_par_iter()
        .map(|config| SweepRow {
            config,
            outcome: evaluate_config(retriever, queries, qrels, config, base, gain),
            best: false,
        })
        .collect();
    let mut best: Option<(usize, T)> = None;
    for (i, row) in rows.iter().enumerate() {
        if let Some(v) = row.outcome.as_ref().ok().and_then(|r| r.mean_ndcg_at(5)) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    if let Some((i, _)) = best {
        rows[i].best = true;
    }
    rows
}

/// Writes the sweep as CSV under [`SWEEP_HEADER`], metrics to four decimals.
/// Failed rows leave the metric cells empty and fill `error`.
pub fn write_sweep_csv<T: Scalar, W: Write + ?Sized>(rows: &[SweepRow<T>], out: &mut W) -> io::Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(SWEEP_HEADER.split(','))?;
    for row in rows {
        let ConfigEcho { alpha, strategy, k } = row.config;
        let mut record = vec![alpha.to_string(), strategy.rank_parents().to_string(), k.to_string()];
        match &row.outcome {
            Ok(report) => {
                let cell = |v: Option<T>| format!("{:.4}", v.map_or(0.0, T::to_f64_lossy));
                record.extend(DEFAULT_CUTOFFS.iter().map(|&c| cell(report.mean_ndcg_at(c))));
                record.extend(DEFAULT_CUTOFFS.iter().map(|&c| cell(report.mean_recall_at(c))));
                record.extend([row.best.to_string(), String::new()]);
            }
            Err(message) => {
                record.extend(std::iter::repeat_n(String::new(), 2 * DEFAULT_CUTOFFS.len()));
                record.extend(["false".to_string(), message.clone()]);
            }
        }
        csv.write_record(&record)?;
    }
    csv.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_order() {
        let configs = SweepGrid::default().configurations();
        assert_eq!(configs.len(), 18);
        assert_eq!(configs[0], ConfigEcho { alpha: 0.5, strategy: RankingStrategy::ParentRescore, k: 20 });
        assert_eq!(configs[4], ConfigEcho { alpha: 0.7, strategy: RankingStrategy::ParentRescore, k: 30 });
        assert_eq!(configs[9].strategy, RankingStrategy::ChildFirst);
        assert_eq!(configs[17], ConfigEcho { alpha: 0.9, strategy: RankingStrategy::ChildFirst, k: 50 });
    }

    #[test]
    fn csv_marks_errors_in_row() {
        let rows: Vec<SweepRow<f64>> = vec![SweepRow {
            config: ConfigEcho { alpha: 1.5, strategy: RankingStrategy::ChildFirst, k: 5 },
            outcome: Err("alpha \"1.5\" out of range".into()),
            best: false,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "1.5,false,5,,,,,,,false,\"alpha \"\"1.5\"\" out of range\"");
    }
}
