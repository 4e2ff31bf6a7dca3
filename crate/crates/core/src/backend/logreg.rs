use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::check_binary;
use super::svm::sample_weights;
use crate::error::Result;
use crate::linalg::cholesky_with_ridge;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub c: f64,
    pub max_iters: usize,
    pub balance_classes: bool,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { c: 1.0, max_iters: 100, balance_classes: false }
    }
}

/// L2-regularised logistic regression, `P(positive | x) = sigmoid(w.x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub c_param: f64,
    /// Objective before the first step and after each accepted step.
    pub loss_history: Vec<f64>,
}

impl LogisticModel {
    pub fn decision_function(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.decision_function(x).mapv(crate::attributes::sigmoid)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<bool> {
        self.decision_function(x).iter().map(|&f| f >= 0.0).collect()
    }
}

/// `log(1 + exp(-z))` without overflow.
fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn objective(w: &DVector<f64>, x: &DMatrix<f64>, y: &[f64], s: &[f64], c: f64) -> f64 {
    let d = w.len() - 1;
    let z = x * w;
    let data: f64 = (0..y.len()).map(|i| s[i] * log1p_exp_neg(y[i] * z[i])).sum();
    0.5 * w.rows(0, d).norm_squared() + c * data
}

/// Newton's method with backtracking on
/// `0.5 |w|^2 + C sum_i s_i log(1 + exp(-y_i (w.x_i + b)))`; the bias is not
/// penalised. Every accepted step lowers the objective.
pub fn logreg_train(x: ArrayView2<'_, f64>, labels: &[bool], config: &LogRegConfig) -> Result<LogisticModel> {
    check_binary(x, labels)?;
    let (n, d) = x.dim();
    let s = sample_weights(labels, config.balance_classes);
    let c = config.c;
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    // augmented design matrix with a trailing bias column
    let xa = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[[i, j]] } else { 1.0 });
    let mut w = DVector::zeros(d + 1);
    let mut loss = objective(&w, &xa, &y, &s, c);
    let mut history = vec![loss];
    for _ in 0..config.max_iters {
        let z = &xa * &w;
        let mut r = DVector::zeros(n);
        let mut h = DVector::zeros(n);
        for i in 0..n {
            let p = crate::attributes::sigmoid(y[i] * z[i]);
            r[i] = -c * s[i] * y[i] * (1.0 - p);
            h[i] = c * s[i] * p * (1.0 - p);
        }
        let mut grad = xa.transpose() * &r;
        for j in 0..d {
            grad[j] += w[j];
        }
        if grad.norm() < 1e-10 * (1.0 + loss.abs()) {
            break;
        }
        let mut hess = xa.transpose() * DMatrix::from_diagonal(&h) * &xa;
        for j in 0..d {
            hess[(j, j)] += 1.0;
        }
        let (chol, _) = cholesky_with_ridge(&hess, 1e-10);
        let step = chol.solve(&grad);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let cand = &w - &step * t;
            let l = objective(&cand, &xa, &y, &s, c);
            if l <= loss - 1e-4 * t * slope {
                accepted = Some((cand, l));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, l)) => {
                let improvement = loss - l;
                w = cand;
                loss = l;
                history.push(loss);
                if improvement <= 1e-14 * (1.0 + loss.abs()) {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(LogisticModel {
        weights: Array1::from_iter(w.rows(0, d).iter().copied()),
        bias: w[d],
        c_param: c,
        loss_history: history,
    })
}
