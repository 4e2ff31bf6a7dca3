use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary confusion counts with positive = disordered, plus the derived
/// unweighted average recall and macro F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub uar: f64,
    pub macro_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let recall_pos = ratio(tp, tp + fn_);
        let recall_neg = ratio(tn, tn + fp);
        let f1_pos = f1(ratio(tp, tp + fp), recall_pos);
        let f1_neg = f1(ratio(tn, tn + fn_), recall_neg);
        Self {
            tp,
            fp,
            tn,
            fn_,
            uar: 0.5 * (recall_pos + recall_neg),
            macro_f1: 0.5 * (f1_pos + f1_neg),
        }
    }
}

/// Scores binary predictions against truths (both `true` = disordered).
pub fn evaluate(predictions: &[bool], truths: &[bool]) -> Result<Metrics> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch { what: "predictions vs truths", expected: truths.len(), got: predictions.len() });
    }
    if truths.iter().all(|&t| t) || truths.iter().all(|&t| !t) {
        return Err(Error::DegenerateLabels("evaluation truths contain a single class".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}
