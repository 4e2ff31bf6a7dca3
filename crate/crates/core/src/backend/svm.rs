use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::check_binary;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub iterations: usize,
    /// Weight each class by `N / (2 N_class)`.
    pub balance_classes: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, iterations: 20_000, balance_classes: false }
    }
}

/// Linear SVM, `f(x) = w.x + b`; positive when `f(x) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub c_param: f64,
}

impl LinearSvmModel {
    pub fn decision_function(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<bool> {
        self.decision_function(x).iter().map(|&f| f >= 0.0).collect()
    }
}

pub(crate) fn sample_weights(labels: &[bool], balance: bool) -> Vec<f64> {
    if !balance {
        return vec![1.0; labels.len()];
    }
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    labels.iter().map(|&l| n / (2.0 * if l { pos } else { n - pos })).collect()
}

/// `0.5 |w|^2 + C sum_i s_i max(0, 1 - y_i (w.x_i + b))`.
pub fn svm_objective(w: ArrayView1<'_, f64>, b: f64, x: ArrayView2<'_, f64>, labels: &[bool], s: &[f64], c: f64) -> f64 {
    let f = x.dot(&w);
    let hinge: f64 = f
        .iter()
        .zip(labels)
        .zip(s)
        .map(|((&fi, &l), &si)| si * (1.0 - sign(l) * (fi + b)).max(0.0))
        .sum();
    0.5 * w.dot(&w) + c * hinge
}

fn sign(l: bool) -> f64 {
    if l {
        1.0
    } else {
        -1.0
    }
}

/// Full-batch subgradient descent with step `1/t` on the primal objective.
/// The returned parameters are whichever of the best iterate and the
/// average over the second half of the run scores lower.
pub fn svm_train(x: ArrayView2<'_, f64>, labels: &[bool], config: &SvmConfig) -> Result<LinearSvmModel> {
    check_binary(x, labels)?;
    let (n, d) = x.dim();
    let s = sample_weights(labels, config.balance_classes);
    let c = config.c;
    let y: Array1<f64> = labels.iter().map(|&l| sign(l)).collect();

    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let mut best = (svm_objective(w.view(), b, x, labels, &s, c), w.clone(), b);
    let mut avg_w = Array1::<f64>::zeros(d);
    let mut avg_b = 0.0;
    let mut avg_count = 0.0;
    let start_avg = config.iterations / 2;
    let mut coef = Array1::<f64>::zeros(n);
    for t in 1..=config.iterations {
        let f = x.dot(&w);
        let mut obj_hinge = 0.0;
        let mut gb = 0.0;
        for i in 0..n {
            let margin = y[i] * (f[i] + b);
            if margin < 1.0 {
                obj_hinge += s[i] * (1.0 - margin);
                coef[i] = c * s[i] * y[i];
                gb -= coef[i];
            } else {
                coef[i] = 0.0;
            }
        }
        let obj = 0.5 * w.dot(&w) + c * obj_hinge;
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
        let gw = &w - &x.t().dot(&coef);
        let eta = 1.0 / t as f64;
        w.scaled_add(-eta, &gw);
        b -= eta * gb;
        if t > start_avg {
            avg_count += 1.0;
            avg_w += &((&w - &avg_w) / avg_count);
            avg_b += (b - avg_b) / avg_count;
        }
    }
    for (cw, cb) in [(w, b), (avg_w, avg_b)] {
        let obj = svm_objective(cw.view(), cb, x, labels, &s, c);
        if obj < best.0 {
            best = (obj, cw, cb);
        }
    }
    Ok(LinearSvmModel { weights: best.1, bias: best.2, c_param: c })
}
