//! Rank-cutoff metrics over a single ranking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Gain applied to a relevance grade in DCG.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// `2^grade - 1`
    #[default]
    Exponential,
    /// `grade`
    Linear,
}

impl Gain {
    fn apply<T: Scalar>(self, grade: u32) -> T {
        match self {
            Gain::Exponential => T::lit(2f64.powi(grade as i32) - 1.0),
            Gain::Linear => T::lit(grade as f64),
        }
    }
}

/// Relevance grades for one query; unlisted documents are grade 0.
pub type Judgments = BTreeMap<String, u32>;

fn discount<T: Scalar>(rank: usize) -> T {
    // rank is 1-based
    T::lit(((rank + 1) as f64).log2())
}

fn dcg<T: Scalar>(grades: impl Iterator<Item = u32>, k: usize, gain: Gain) -> T {
    grades
        .take(k)
        .enumerate()
        .map(|(i, g)| gain.apply::<T>(g) / discount::<T>(i + 1))
        .fold(T::zero(), |acc, x| acc + x)
}

/// nDCG@k; `0` when the query has no relevant documents.
pub fn ndcg_at_k<T: Scalar, S: AsRef<str>>(ranking: &[S], judgments: &Judgments, k: usize, gain: Gain) -> T {
    let mut ideal: Vec<u32> = judgments.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: T = dcg(ideal.into_iter(), k, gain);
    if idcg <= T::zero() {
        return T::zero();
    }
    let actual: T = dcg(
        ranking.iter().map(|d| judgments.get(d.as_ref()).copied().unwrap_or(0)),
        k,
        gain,
    );
    actual / idcg
}

/// Fraction of relevant (grade > 0) documents found in the top k; `0` when
/// the query has none.
pub fn recall_at_k<T: Scalar, S: AsRef<str>>(ranking: &[S], judgments: &Judgments, k: usize) -> T {
    let relevant = judgments.values().filter(|&&g| g > 0).count();
    if relevant == 0 {
        return T::zero();
    }
    let found = ranking
        .iter()
        .take(k)
        .filter(|d| judgments.get(d.as_ref()).is_some_and(|&g| g > 0))
        .count();
    T::lit(found as f64 / relevant as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judged(pairs: &[(&str, u32)]) -> Judgments {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn ndcg_worked_example() {
        let rels = judged(&[("A", 1), ("C", 1)]);
        let got: f64 = ndcg_at_k(&["A", "B", "C"], &rels, 3, Gain::Exponential);
        let expected = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.9197).abs() < 5e-5);
        let linear: f64 = ndcg_at_k(&["A", "B", "C"], &rels, 3, Gain::Linear);
        assert_eq!(linear, got);
    }

    #[test]
    fn ndcg_perfect_and_empty() {
        let rels = judged(&[("A", 2), ("B", 1), ("C", 0)]);
        assert_eq!(ndcg_at_k::<f64, _>(&["A", "B"], &rels, 5, Gain::Exponential), 1.0);
        assert_eq!(ndcg_at_k::<f64, _>(&["A"], &judged(&[("A", 0)]), 5, Gain::Exponential), 0.0);
        assert_eq!(ndcg_at_k::<f64, &str>(&[], &rels, 5, Gain::Exponential), 0.0);
    }

    #[test]
    fn graded_gain_differs() {
        let rels = judged(&[("A", 1), ("B", 2)]);
        let exp: f64 = ndcg_at_k(&["A", "B"], &rels, 2, Gain::Exponential);
        let lin: f64 = ndcg_at_k(&["A", "B"], &rels, 2, Gain::Linear);
        // exponential: (1 + 3/log2 3) / (3 + 1/log2 3); linear: (1 + 2/log2 3) / (2 + 1/log2 3)
        let l3 = 3f64.log2();
        assert!((exp - (1.0 + 3.0 / l3) / (3.0 + 1.0 / l3)).abs() < 1e-12);
        assert!((lin - (1.0 + 2.0 / l3) / (2.0 + 1.0 / l3)).abs() < 1e-12);
    }

    #[test]
    fn recall_examples() {
        let rels = judged(&[("A", 1), ("Z", 1)]);
        assert_eq!(recall_at_k::<f64, _>(&["A", "B", "C", "D", "E"], &rels, 5), 0.5);
        assert_eq!(recall_at_k::<f64, _>(&["Z", "A"], &rels, 5), 1.0);
        assert_eq!(recall_at_k::<f64, _>(&["X", "A"], &rels, 1), 0.0);
        assert_eq!(recall_at_k::<f64, _>(&["A"], &judged(&[]), 1), 0.0);
    }

    #[test]
    fn f32_metrics() {
        let rels = judged(&[("A", 1), ("C", 1)]);
        let got: f32 = ndcg_at_k(&["A", "B", "C"], &rels, 3, Gain::Exponential);
        assert!((got - 0.919_720_7).abs() < 1e-6);
    }
}
