//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Exact `min_b` of the soft-margin objective at fixed `w`: the hinge sum is
/// piecewise linear in `b`, so its minimum sits on a breakpoint.
pub fn svm_objective_best_bias(w: [f64; 2], x: &Array2<f64>, y: &[f64], c: f64) -> (f64, f64) {
    let f: Vec<f64> = x.rows().into_iter().map(|r| w[0] * r[0] + w[1] * r[1]).collect();
    let reg = 0.5 * (w[0] * w[0] + w[1] * w[1]);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..y.len() {
        let b = y[i] - f[i];
        let hinge: f64 = (0..y.len()).map(|j| (1.0 - y[j] * (f[j] + b)).max(0.0)).sum();
        let obj = reg + c * hinge;
        if obj < best.0 {
            best = (obj, b);
        }
    }
    best
}

/// Minimum of the 2-D soft-margin SVM objective by successively refined grid
/// search over `w`, with the bias minimised exactly at every grid point.
pub fn svm_oracle_2d(x: &Array2<f64>, y: &[f64], c: f64) -> f64 {
    let (f0, _) = svm_objective_best_bias([0.0, 0.0], x, y, c);
    // any minimiser satisfies 0.5 |w|^2 <= f(0, b*)
    let mut radius = (2.0 * f0).sqrt();
    let mut center = [0.0, 0.0];
    let mut best = f0;
    let mut steps = 100;
    for _ in 0..40 {
        let h = 2.0 * radius / steps as f64;
        let mut round_best = (f64::INFINITY, center);
        for i in 0..=steps {
            for j in 0..=steps {
                let w = [center[0] - radius + i as f64 * h, center[1] - radius + j as f64 * h];
                let (obj, _) = svm_objective_best_bias(w, x, y, c);
                if obj < round_best.0 {
                    round_best = (obj, w);
                }
            }
        }
        best = best.min(round_best.0);
        center = round_best.1;
        radius = 5.0 * h;
        steps = 20;
    }
    best
}

/// Two overlapping Gaussian clouds in 2-D with labels +-1.
pub fn svm_fixture(seed: u64, n_per_class: usize, separation: f64) -> (Array2<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::new(0.0, 1.0).unwrap();
    let mut x = Array2::zeros((2 * n_per_class, 2));
    let mut labels = Vec::new();
    for i in 0..2 * n_per_class {
        let pos = i >= n_per_class;
        let shift = if pos { separation / 2.0 } else { -separation / 2.0 };
        x[[i, 0]] = shift + g.sample(&mut rng);
        x[[i, 1]] = 0.5 * shift + 1.5 * g.sample(&mut rng);
        labels.push(pos);
    }
    (x, labels)
}

pub fn signs(labels: &[bool]) -> Vec<f64> {
    labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect()
}

/// Unnormalised log posterior of `w` given Baum-Welch statistics, written
/// directly from the generative model: a standard normal prior on `w` and,
/// per component, the `w`-dependent part of the Gaussian frame likelihood.
pub fn ivector_log_posterior(w: &Array1<f64>, n: &Array1<f64>, f: &Array2<f64>, t: &Array2<f64>, sigma: &Array1<f64>) -> f64 {
    let (c, d) = f.dim();
    let mut lp = -0.5 * w.dot(w);
    for k in 0..c {
        for j in 0..d {
            let row = k * d + j;
            let tw: f64 = t.row(row).dot(w);
            lp += (f[[k, j]] * tw - 0.5 * n[k] * tw * tw) / sigma[row];
        }
    }
    lp
}

/// Maximiser of [`ivector_log_posterior`] for rank 2: dense grid, then
/// shrinking-step coordinate search.
pub fn ivector_oracle_2d(n: &Array1<f64>, f: &Array2<f64>, t: &Array2<f64>, sigma: &Array1<f64>) -> Array1<f64> {
    let lp = |a: f64, b: f64| ivector_log_posterior(&Array1::from(vec![a, b]), n, f, t, sigma);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    let steps = 400;
    let range = 10.0;
    for i in 0..=steps {
        for j in 0..=steps {
            let a = -range + 2.0 * range * i as f64 / steps as f64;
            let b = -range + 2.0 * range * j as f64 / steps as f64;
            let v = lp(a, b);
            if v > best.0 {
                best = (v, a, b);
            }
        }
    }
    let mut step = 2.0 * range / steps as f64;
    let dirs = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)];
    while step > 1e-9 {
        let mut moved = false;
        for (da, db) in dirs {
            let (a, b) = (best.1 + da * step, best.2 + db * step);
            let v = lp(a, b);
            if v > best.0 {
                best = (v, a, b);
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Array1::from(vec![best.1, best.2])
}
