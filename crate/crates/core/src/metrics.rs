//! Exact-match accuracy and ANLS scoring.
//!
//! ANLS gives each item `1 - NL` when the normalized Levenshtein distance
//! `NL = lev(pred, gold) / max(|pred|, |gold|)` is below the threshold `tau`,
//! and 0 otherwise. Lengths count Unicode scalar values. Answers are
//! compared after whitespace normalization only; there is no case or width
//! folding.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qa_builder::QAPair;

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("prediction for {0:?} appears more than once")]
    DuplicatePrediction(String),
    #[error("gold item {0:?} appears more than once")]
    DuplicateGold(String),
    #[error("tau must lie in (0, 1), got {0}")]
    InvalidTau(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub qa_id: String,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub qa_id: String,
    pub exact: bool,
    pub anls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n_items: usize,
    pub tau: f64,
    pub accuracy: f64,
    pub anls: f64,
    /// Sorted by `qa_id`.
    pub per_item: Vec<ItemScore>,
    /// Gold items with no prediction.
    pub missing: Vec<String>,
    /// Predictions with no gold item; not scored.
    pub extra: Vec<String>,
}

impl ScoreReport {
    pub fn summary_line(&self) -> String {
        format!(
            "n={} accuracy={:.4} anls={:.4}",
            self.n_items, self.accuracy, self.anls
        )
    }
}

pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    // single rolling row over b
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(ca != cb);
            row[j + 1] = (above + 1).min(row[j] + 1).min(diag + cost);
            diag = above;
        }
    }
    row[b.len()]
}

/// Normalized Levenshtein distance; 0 when both strings are empty.
pub fn normalized_levenshtein(pred: &str, gold: &str) -> f64 {
    let longest = pred.chars().count().max(gold.chars().count());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(pred, gold) as f64 / longest as f64
}

/// Per-item ANLS. Inputs are expected to be normalized already.
pub fn anls_item(pred: &str, gold: &str, tau: f64) -> f64 {
    let nl = normalized_levenshtein(pred, gold);
    if nl < tau {
        1.0 - nl
    } else {
        0.0
    }
}

pub fn score(
    predictions: &[Prediction],
    gold: &[QAPair],
    tau: f64,
) -> Result<ScoreReport, MetricsError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(MetricsError::InvalidTau(tau));
    }
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(&p.qa_id, &p.prediction).is_some() {
            return Err(MetricsError::DuplicatePrediction(p.qa_id.clone()));
        }
    }

    let mut gold_sorted: Vec<&QAPair> = gold.iter().collect();
    gold_sorted.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    if let Some(w) = gold_sorted.windows(2).find(|w| w[0].qa_id == w[1].qa_id) {
        return Err(MetricsError::DuplicateGold(w[0].qa_id.clone()));
    }

    let mut missing = Vec::new();
    let per_item: Vec<ItemScore> = gold_sorted
        .iter()
        .map(|g| match by_id.get(g.qa_id.as_str()) {
            Some(pred) => {
                let pred = normalize_answer(pred);
                let gold_answer = normalize_answer(&g.answer);
                ItemScore {
                    qa_id: g.qa_id.clone(),
                    exact: pred == gold_answer,
                    anls: anls_item(&pred, &gold_answer, tau),
                }
            }
            None => {
                missing.push(g.qa_id.clone());
                ItemScore {
                    qa_id: g.qa_id.clone(),
                    exact: false,
                    anls: 0.0,
                }
            }
        })
        .collect();

    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.qa_id.as_str()).collect();
    let mut extra: Vec<String> = predictions
        .iter()
        .filter(|p| !gold_ids.contains(p.qa_id.as_str()))
        .map(|p| p.qa_id.clone())
        .collect();
    extra.sort();

    // summed in qa_id order so the result does not depend on input order
    let n = per_item.len();
    let (accuracy, anls) = if n == 0 {
        (0.0, 0.0)
    } else {
        let exact: f64 = per_item.iter().map(|i| f64::from(u8::from(i.exact))).sum();
        let anls: f64 = per_item.iter().map(|i| i.anls).sum();
        (exact / n as f64, anls / n as f64)
    };

    Ok(ScoreReport {
        n_items: n,
        tau,
        accuracy,
        anls,
        per_item,
        missing,
        extra,
    })
}
