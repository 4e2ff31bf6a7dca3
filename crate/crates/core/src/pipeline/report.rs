use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backend::Metrics;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub uar: f64,
    pub macro_f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl FoldResult {
    pub fn new(fold: usize, m: &Metrics) -> Self {
        Self { fold, uar: m.uar, macro_f1: m.macro_f1, tp: m.tp, fp: m.fp, tn: m.tn, fn_: m.fn_ }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub config_hash: String,
    pub folds: Vec<FoldResult>,
    pub mean_uar: f64,
    pub std_uar: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl CrossvalReport {
    pub fn new(config_hash: String, folds: Vec<FoldResult>) -> Self {
        let (mean_uar, std_uar) = mean_std(folds.iter().map(|f| f.uar));
        let (mean_macro_f1, std_macro_f1) = mean_std(folds.iter().map(|f| f.macro_f1));
        Self { config_hash, folds, mean_uar, std_uar, mean_macro_f1, std_macro_f1 }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One JSON object per fold, newline terminated.
    pub fn metrics_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for f in &self.folds {
            out += &serde_json::to_string(f)?;
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("config {}\n", self.config_hash);
        out += "fold     UAR  macroF1    TP    FP    TN    FN\n";
        for f in &self.folds {
            let _ = writeln!(out, "{:>4} {:>7.4} {:>8.4} {:>5} {:>5} {:>5} {:>5}", f.fold, f.uar, f.macro_f1, f.tp, f.fp, f.tn, f.fn_);
        }
        let _ = writeln!(out, "mean {:>7.4} {:>8.4}", self.mean_uar, self.mean_macro_f1);
        let _ = writeln!(out, " std {:>7.4} {:>8.4}", self.std_uar, self.std_macro_f1);
        out
    }
}
