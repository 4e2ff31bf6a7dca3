use std::f64::consts::PI;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CHUNK_FRAMES;
use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGmm {
    weights: Array1<f64>,
    means: Array2<f64>,
    variances: Array2<f64>,
}

/// Per-component terms of the log density, cached for evaluation.
struct Precomputed {
    /// `means / variances`, C x D.
    scaled_means: Array2<f64>,
    /// `-0.5 / variances`, C x D.
    neg_half_precision: Array2<f64>,
    /// C.
    gconst: Array1<f64>,
}

impl DiagGmm {
    pub fn new(weights: Array1<f64>, means: Array2<f64>, variances: Array2<f64>) -> Result<Self> {
        let c = weights.len();
        if c == 0 {
            return Err(Error::TooFew { what: "mixture components", need: 1, got: 0 });
        }
        if means.nrows() != c || variances.raw_dim() != means.raw_dim() {
            return Err(Error::DimensionMismatch { what: "gmm parameters", expected: c, got: means.nrows() });
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("mixture weights must be a probability vector".into()));
        }
        if variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("variances must be positive".into()));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gmm means"));
        }
        Ok(Self { weights, means, variances })
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn variances(&self) -> &Array2<f64> {
        &self.variances
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn precompute(&self) -> Precomputed {
        let d = self.dim() as f64;
        let scaled_means = &self.means / &self.variances;
        let neg_half_precision = self.variances.mapv(|v| -0.5 / v);
        let gconst = Array1::from_iter((0..self.num_components()).map(|c| {
            let logdet: f64 = self.variances.row(c).iter().map(|v| v.ln()).sum();
            let quad: f64 = self.means.row(c).iter().zip(self.variances.row(c)).map(|(m, v)| m * m / v).sum();
            self.weights[c].ln() - 0.5 * (d * (2.0 * PI).ln() + logdet + quad)
        }));
        Precomputed { scaled_means, neg_half_precision, gconst }
    }

    /// `log w_c + log N(x_t; m_c, S_c)` for every frame and component.
    pub fn component_log_likelihoods(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(x.ncols())?;
        Ok(joint_log_likelihoods(&self.precompute(), x))
    }

    /// Total log-likelihood of the frames.
    pub fn log_likelihood(&self, x: ArrayView2<'_, f64>) -> Result<f64> {
        self.check_dim(x.ncols())?;
        let pre = self.precompute();
        Ok(x.axis_chunks_iter(Axis(0), CHUNK_FRAMES)
            .map(|chunk| {
                let mut ll = joint_log_likelihoods(&pre, chunk);
                normalize_rows(&mut ll)
            })
            .sum())
    }

    /// Component responsibilities (`T x C`, rows sum to one).
    pub fn responsibilities(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut ll = self.component_log_likelihoods(x)?;
        normalize_rows(&mut ll);
        Ok(ll)
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch { what: "gmm input", expected: self.dim(), got: d });
        }
        Ok(())
    }

    /// Zeroth, first and second order sums over `x`, chunked and reduced in
    /// chunk order.
    pub(crate) fn accumulate(&self, x: ArrayView2<'_, f64>) -> Accumulators {
        let pre = self.precompute();
        let (c, d) = (self.num_components(), self.dim());
        let chunks: Vec<_> = x.axis_chunks_iter(Axis(0), CHUNK_FRAMES).collect();
        let partials: Vec<Accumulators> = chunks
            .into_par_iter()
            .map(|chunk| {
                let mut resp = joint_log_likelihoods(&pre, chunk);
                let ll = normalize_rows(&mut resp);
                Accumulators {
                    ll,
                    n: resp.sum_axis(Axis(0)),
                    sx: resp.t().dot(&chunk),
                    sxx: resp.t().dot(&chunk.mapv(|v| v * v)),
                }
            })
            .collect();
        let mut total = Accumulators::zeros(c, d);
        for p in partials {
            total.ll += p.ll;
            total.n += &p.n;
            total.sx += &p.sx;
            total.sxx += &p.sxx;
        }
        total
    }
}

pub(crate) struct Accumulators {
    pub ll: f64,
    pub n: Array1<f64>,
    pub sx: Array2<f64>,
    pub sxx: Array2<f64>,
}

impl Accumulators {
    fn zeros(c: usize, d: usize) -> Self {
        Self { ll: 0.0, n: Array1::zeros(c), sx: Array2::zeros((c, d)), sxx: Array2::zeros((c, d)) }
    }
}

fn joint_log_likelihoods(pre: &Precomputed, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let xx = x.mapv(|v| v * v);
    x.dot(&pre.scaled_means.t()) + xx.dot(&pre.neg_half_precision.t()) + &pre.gconst
}

/// Turns each row of joint log-likelihoods into posteriors in place and
/// returns the summed per-row log normaliser.
pub(crate) fn normalize_rows(ll: &mut Array2<f64>) -> f64 {
    let mut total = 0.0;
    for mut row in ll.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
        total += max + s.ln();
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UbmConfig {
    pub n_components: usize,
    pub n_iters: usize,
    pub seed: u64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor: f64,
    /// Frames sampled for k-means++ initialisation.
    pub init_frames: usize,
    pub kmeans_iters: usize,
}

impl Default for UbmConfig {
    fn default() -> Self {
        Self {
            n_components: 256,
            n_iters: 20,
            seed: 0,
            variance_floor: 1e-3,
            init_frames: 100_000,
            kmeans_iters: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UbmTraining {
    pub gmm: DiagGmm,
    /// Total log-likelihood of the training frames before the first update
    /// and after each EM iteration.
    pub log_likelihoods: Vec<f64>,
}

fn stack(features: &[&FeatureMatrix]) -> Result<Array2<f64>> {
    let first = features.first().ok_or(Error::TooFew { what: "utterances", need: 1, got: 0 })?;
    for f in features {
        if f.dim() != first.dim() {
            return Err(Error::DimensionMismatch { what: "ubm training features", expected: first.dim(), got: f.dim() });
        }
    }
    let views: Vec<_> = features.iter().map(|f| f.frames().view()).collect();
    Ok(concatenate(Axis(0), &views).expect("dims checked"))
}

/// Squared distances from every row of `x` to every centre.
fn sq_distances(x: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>) -> Array2<f64> {
    let xn = x.map_axis(Axis(1), |r| r.dot(&r));
    let cn = centers.map_axis(Axis(1), |r| r.dot(&r));
    let mut d = x.dot(&centers.t()) * -2.0;
    Zip::indexed(&mut d).for_each(|(i, j), v| *v = (*v + xn[i] + cn[j]).max(0.0));
    d
}

fn kmeans_pp(x: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    centers.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut best = sq_distances(x, centers.slice(s![0..1, ..])).column(0).to_owned();
    for c in 1..k {
        let total: f64 = best.sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            best.iter().position(|&d| {
                acc += d;
                acc >= target
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        let d = sq_distances(x, centers.slice(s![c..c + 1, ..]));
        Zip::from(&mut best).and(d.column(0)).for_each(|b, &v| *b = b.min(v));
    }
    centers
}

fn argmin_rows(d: &Array2<f64>) -> Vec<usize> {
    d.rows()
        .into_iter()
        .map(|r| r.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap())
        .collect()
}

fn lloyd(x: ArrayView2<'_, f64>, centers: &mut Array2<f64>, iters: usize) -> Vec<usize> {
    let mut assign = argmin_rows(&sq_distances(x, centers.view()));
    for _ in 0..iters {
        let mut sums = Array2::zeros(centers.raw_dim());
        let mut counts = vec![0usize; centers.nrows()];
        for (i, &a) in assign.iter().enumerate() {
            sums.row_mut(a).scaled_add(1.0, &x.row(i));
            counts[a] += 1;
        }
        for (c, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                centers.row_mut(c).assign(&(&sums.row(c) / cnt as f64));
            }
        }
        let next = argmin_rows(&sq_distances(x, centers.view()));
        if next == assign {
            break;
        }
        assign = next;
    }
    assign
}

/// Trains a diagonal GMM-UBM by EM from a seeded k-means++ start.
pub fn train_ubm(features: &[&FeatureMatrix], config: &UbmConfig) -> Result<UbmTraining> {
    let c = config.n_components;
    if c == 0 {
        return Err(Error::InvalidArgument("n_components must be at least 1".into()));
    }
    let x = stack(features)?;
    let (n, d) = x.dim();
    if n < 10 * c {
        return Err(Error::TooFew { what: "frames for ubm training (10 per component)", need: 10 * c, got: n });
    }
    let global_var = x.var_axis(Axis(0), 0.0);
    let floor = global_var.mapv(|v| (config.variance_floor * v).max(1e-10));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let subset = if n > config.init_frames {
        let mut idx = sample(&mut rng, n, config.init_frames).into_vec();
        idx.sort_unstable();
        x.select(Axis(0), &idx)
    } else {
        x.clone()
    };
    let mut centers = kmeans_pp(subset.view(), c, &mut rng);
    let assign = lloyd(subset.view(), &mut centers, config.kmeans_iters);

    let m = subset.nrows() as f64;
    let mut counts = vec![0.0; c];
    let mut sq = Array2::<f64>::zeros((c, d));
    for (i, &a) in assign.iter().enumerate() {
        counts[a] += 1.0;
        let diff = &subset.row(i) - &centers.row(a);
        sq.row_mut(a).scaled_add(1.0, &diff.mapv(|v| v * v));
    }
    let weights = Array1::from_iter(counts.iter().map(|&k| (k + 1.0) / (m + c as f64)));
    let mut variances = Array2::zeros((c, d));
    for k in 0..c {
        for j in 0..d {
            let v = if counts[k] > 1.0 { sq[[k, j]] / counts[k] } else { global_var[j] };
            variances[[k, j]] = v.max(floor[j]);
        }
    }
    let mut gmm = DiagGmm { weights, means: centers, variances };

    let mut history = Vec::with_capacity(config.n_iters + 1);
    for _ in 0..config.n_iters {
        let acc = gmm.accumulate(x.view());
        history.push(acc.ll);
        m_step(&mut gmm, &acc, n as f64, &floor);
    }
    history.push(gmm.accumulate(x.view()).ll);
    Ok(UbmTraining { gmm, log_likelihoods: history })
}

fn m_step(gmm: &mut DiagGmm, acc: &Accumulators, n: f64, floor: &Array1<f64>) {
    const DEAD: f64 = 1e-10;
    for c in 0..gmm.num_components() {
        let occ = acc.n[c];
        gmm.weights[c] = occ / n;
        if occ < DEAD {
            // parameters of an unused component do not affect the likelihood
            continue;
        }
        for j in 0..gmm.dim() {
            let mean = acc.sx[[c, j]] / occ;
            let var = acc.sxx[[c, j]] / occ - mean * mean;
            gmm.means[[c, j]] = mean;
            gmm.variances[[c, j]] = var.max(floor[j]);
        }
    }
    let total = gmm.weights.sum();
    gmm.weights /= total;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::FeatureKind;
    use rand_distr::{Distribution, Normal};

    fn frames(x: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new("u", FeatureKind::Mfcc, 0.01, x).unwrap()
    }

    #[test]
    fn single_component_matches_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Normal::new(3.0, 2.0).unwrap();
        let x = Array2::from_shape_fn((2000, 3), |_| g.sample(&mut rng));
        let f = frames(x.clone());
        let cfg = UbmConfig { n_components: 1, n_iters: 5, ..Default::default() };
        let ubm = train_ubm(&[&f], &cfg).unwrap().gmm;
        let mean = x.mean_axis(Axis(0)).unwrap();
        let se = 2.0 / (2000f64).sqrt();
        for j in 0..3 {
            assert!((ubm.means()[[0, j]] - mean[j]).abs() < 3.0 * se);
            assert!((ubm.means()[[0, j]] - mean[j]).abs() < 1e-9);
        }
        let r = ubm.responsibilities(x.view()).unwrap();
        assert!(r.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn two_clusters_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = Normal::new(0.0, 1.0).unwrap();
        let mut x = Array2::zeros((10_000, 2));
        for i in 0..10_000 {
            let center = if i < 5000 { -5.0 } else { 5.0 };
            for j in 0..2 {
                x[[i, j]] = center + g.sample(&mut rng);
            }
        }
        let cfg = UbmConfig { n_components: 2, n_iters: 20, ..Default::default() };
        let trained = train_ubm(&[&frames(x)], &cfg).unwrap();
        let mut means: Vec<f64> = trained.gmm.means().column(0).to_vec();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 5.0).abs() < 0.1 && (means[1] - 5.0).abs() < 0.1, "{means:?}");
        for &w in trained.gmm.weights() {
            assert!((w - 0.5).abs() < 0.05);
        }
        for w in trained.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs());
        }
    }

    #[test]
    fn too_few_frames() {
        let f = frames(Array2::zeros((50, 2)));
        let cfg = UbmConfig { n_components: 8, ..Default::default() };
        assert!(matches!(train_ubm(&[&f], &cfg), Err(Error::TooFew { .. })));
    }

    #[test]
    fn constant_data_is_floored_not_fatal() {
        let f = frames(Array2::from_elem((200, 2), 1.0));
        let cfg = UbmConfig { n_components: 4, n_iters: 3, ..Default::default() };
        let g = train_ubm(&[&f], &cfg).unwrap().gmm;
        assert!(g.variances().iter().all(|&v| v > 0.0));
        assert!((g.weights().sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_for_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Normal::new(0.0, 1.0).unwrap();
        let f = frames(Array2::from_shape_fn((3000, 4), |_| g.sample(&mut rng)));
        let cfg = UbmConfig { n_components: 6, n_iters: 4, seed: 11, ..Default::default() };
        let a = train_ubm(&[&f], &cfg).unwrap();
        let b = train_ubm(&[&f], &cfg).unwrap();
        assert_eq!(a.gmm, b.gmm);
    }
}
