//! Span and classification metrics. The positive class is Low risk of bias.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, replace punctuation with spaces, drop English articles and
/// split on whitespace.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect::<String>()
        .to_lowercase();
    cleaned
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScore {
    pub f1: f64,
    pub em: f64,
}

/// Token-overlap F1 and exact match after normalization.
pub fn span_f1_em(pred: &str, gold: &str) -> SpanScore {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    if p.is_empty() && g.is_empty() {
        return SpanScore { f1: 1.0, em: 1.0 };
    }
    if p.is_empty() || g.is_empty() {
        return SpanScore { f1: 0.0, em: 0.0 };
    }
    let em = if p == g { 1.0 } else { 0.0 };
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for w in &g {
        *gold_counts.entry(w).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for w in &p {
        if let Some(c) = gold_counts.get_mut(w.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return SpanScore { f1: 0.0, em };
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    SpanScore {
        f1: 2.0 * precision * recall / (precision + recall),
        em,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_labels(labels: &[bool], preds: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&y, &p) in labels.iter().zip(preds) {
            match (y, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }

    /// The same counts with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        Confusion {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroPrf {
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
    /// Index 0 is the negative class (High/Unclear), index 1 the positive (Low).
    pub per_class: [ClassPrf; 2],
    pub confusion: Confusion,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn class_prf(tp: usize, fp: usize, fn_: usize, name: &str, warnings: &mut Vec<String>) -> ClassPrf {
    let precision = if tp + fp == 0 {
        warnings.push(format!("no predictions for class {name}; precision set to 0"));
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        warnings.push(format!("no gold instances of class {name}; recall set to 0"));
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassPrf {
        precision,
        recall,
        f1,
        support: tp + fn_,
    }
}

/// Per-class precision, recall and F1 averaged without weights over the two
/// classes.
pub fn macro_prf(labels: &[bool], preds: &[bool]) -> Result<MacroPrf> {
    if labels.len() != preds.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: preds.len(),
        });
    }
    let confusion = Confusion::from_labels(labels, preds);
    let mut warnings = Vec::new();
    let c = confusion;
    let neg = class_prf(c.tn, c.fn_, c.fp, "high/unclear", &mut warnings);
    let pos = class_prf(c.tp, c.fp, c.fn_, "low", &mut warnings);
    for w in &warnings {
        log::debug!("{w}");
    }
    Ok(MacroPrf {
        precision: (neg.precision + pos.precision) / 2.0,
        recall: (neg.recall + pos.recall) / 2.0,
        macro_f1: (neg.f1 + pos.f1) / 2.0,
        per_class: [neg, pos],
        confusion,
        warnings,
    })
}

/// Cumulative `(false positives, true positives)` after each distinct score
/// threshold, from the highest score down, starting at `(0, 0)`.
fn roc_counts(scores: &[f64], labels: &[bool]) -> Result<(Vec<(u64, u64)>, u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&y| y).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "ROC AUC needs at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0u64, 0u64)];
    let (mut fp, mut tp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp, tp));
    }
    Ok((points, pos, neg))
}

/// Area under the ROC curve by trapezoidal integration over distinct
/// thresholds. Equals `P(score_pos > score_neg) + P(tie) / 2`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (points, pos, neg) = roc_counts(scores, labels)?;
    // Twice the area in count units keeps the sum an exact integer.
    let twice_area: u64 = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1))
        .sum();
    Ok(twice_area as f64 / (2 * pos * neg) as f64)
}

/// ROC curve as `(fpr, tpr)` pairs.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (points, pos, neg) = roc_counts(scores, labels)?;
    Ok(points
        .into_iter()
        .map(|(fp, tp)| (fp as f64 / neg as f64, tp as f64 / pos as f64))
        .collect())
}
