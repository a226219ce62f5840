use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Labelled;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Fraction of examples whose arg-max output is a true label.
    Accuracy,
    /// Mean over examples of `|top-k outputs ∩ true labels| / |true labels|`.
    RecallAtK(usize),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Accuracy => write!(f, "accuracy"),
            Metric::RecallAtK(k) => write!(f, "recall_at_{k}"),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    /// Parses the names produced by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "accuracy" {
            return Ok(Metric::Accuracy);
        }
        s.strip_prefix("recall_at_")
            .and_then(|k| k.parse().ok())
            .filter(|&k| k > 0)
            .map(Metric::RecallAtK)
            .ok_or_else(|| Error::BadConfig(format!("unknown metric `{s}`")))
    }
}

/// Indices of the `k` largest scores, largest first, ties to the smaller
/// index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn recall_at_k(scores: &[f64], truth: &[usize], k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = top_k(scores, k).iter().filter(|p| truth.contains(p)).count();
    hits as f64 / truth.len() as f64
}

pub fn argmax_correct(scores: &[f64], truth: &[usize]) -> bool {
    top_k(scores, 1).first().is_some_and(|p| truth.contains(p))
}

/// Averages `metric` over `examples` using the scores `scorer` produces from
/// the full model.
pub fn evaluate<E: Labelled>(
    examples: &[E],
    metric: Metric,
    mut scorer: impl FnMut(&E) -> Result<Vec<f64>>,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for ex in examples {
        let scores = scorer(ex)?;
        total += match metric {
            Metric::Accuracy => argmax_correct(&scores, ex.target_labels()) as u8 as f64,
            Metric::RecallAtK(k) => recall_at_k(&scores, ex.target_labels(), k),
        };
    }
    Ok(total / examples.len() as f64)
}
