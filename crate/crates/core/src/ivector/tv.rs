use nalgebra::{DMatrix, DVector};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BaumWelchStats, DiagGmm};
use crate::error::{Error, Result};
use crate::frontend::FeatureKind;
use crate::linalg::{cholesky_with_ridge, from_na, to_na};

/// Total-variability model `mu = m + T w` over the stacked UBM super-vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalVariability {
    n_components: usize,
    dim: usize,
    m: Array1<f64>,
    t: Array2<f64>,
    sigma: Array1<f64>,
}

impl TotalVariability {
    /// `m` and `sigma` are C*D super-vectors (component-major); `t` is C*D x R.
    pub fn new(n_components: usize, dim: usize, m: Array1<f64>, t: Array2<f64>, sigma: Array1<f64>) -> Result<Self> {
        let cd = n_components * dim;
        if cd == 0 {
            return Err(Error::InvalidArgument("empty super-vector".into()));
        }
        for (what, got) in [("tv mean super-vector", m.len()), ("tv matrix rows", t.nrows()), ("tv variances", sigma.len())] {
            if got != cd {
                return Err(Error::DimensionMismatch { what, expected: cd, got });
            }
        }
        if t.ncols() == 0 || t.ncols() > cd {
            return Err(Error::InvalidArgument(format!("rank {} must be in 1..={cd}", t.ncols())));
        }
        if sigma.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("tv variances must be positive".into()));
        }
        if m.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tv parameters"));
        }
        Ok(Self { n_components, dim, m, t, sigma })
    }

    /// Model sharing the UBM's means and variances with the given `T`.
    pub fn from_ubm(ubm: &DiagGmm, t: Array2<f64>) -> Result<Self> {
        let m = Array1::from_iter(ubm.means().iter().copied());
        let sigma = Array1::from_iter(ubm.variances().iter().copied());
        Self::new(ubm.num_components(), ubm.dim(), m, t, sigma)
    }

    pub fn num_components(&self) -> usize {
        self.n_components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.t.ncols()
    }

    pub fn mean_supervector(&self) -> &Array1<f64> {
        &self.m
    }

    pub fn t_matrix(&self) -> &Array2<f64> {
        &self.t
    }

    pub fn sigma(&self) -> &Array1<f64> {
        &self.sigma
    }

    /// Caches the per-component precision products used by every extraction.
    pub fn extractor(&self) -> IvectorExtractor<'_> {
        let (c, d, r) = (self.n_components, self.dim, self.rank());
        let tsi = &self.t / &self.sigma.view().insert_axis(Axis(1));
        let mut precisions = Array2::zeros((c, r * r));
        for k in 0..c {
            let rows = s![k * d..(k + 1) * d, ..];
            let p = self.t.slice(rows).t().dot(&tsi.slice(rows));
            precisions.row_mut(k).assign(&Array1::from_iter(p.iter().copied()));
        }
        IvectorExtractor { tv: self, tsi, precisions }
    }

    fn check(&self, stats: &BaumWelchStats) -> Result<()> {
        if stats.num_components() != self.n_components || stats.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "stats against tv model",
                expected: self.n_components * self.dim,
                got: stats.num_components() * stats.dim(),
            });
        }
        Ok(())
    }
}

/// Posterior of the latent factor for one set of statistics.
struct Posterior {
    mean: DVector<f64>,
    /// Inverse posterior precision `L^-1`.
    cov: DMatrix<f64>,
    /// `0.5 b' L^-1 b - 0.5 log|L|`, the T-dependent part of the marginal
    /// log-likelihood of the statistics.
    objective: f64,
}

/// A [`TotalVariability`] model with cached per-component products.
pub struct IvectorExtractor<'a> {
    tv: &'a TotalVariability,
    /// `Sigma^-1 T`, C*D x R.
    tsi: Array2<f64>,
    /// Row c holds `T_c' Sigma_c^-1 T_c` flattened, C x R*R.
    precisions: Array2<f64>,
}

impl IvectorExtractor<'_> {
    fn posterior(&self, stats: &BaumWelchStats) -> Posterior {
        let r = self.tv.rank();
        let l_flat = stats.n.dot(&self.precisions);
        let mut l = DMatrix::from_row_slice(r, r, l_flat.as_slice().expect("contiguous"));
        for i in 0..r {
            l[(i, i)] += 1.0;
        }
        let f = flatten(stats.f.view());
        let b = self.tsi.t().dot(&f);
        let b = DVector::from_iterator(r, b.iter().copied());
        let chol = l.cholesky().expect("L = I + PSD is positive definite");
        let mean = chol.solve(&b);
        let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let objective = 0.5 * b.dot(&mean) - 0.5 * logdet;
        Posterior { mean, cov: chol.inverse(), objective }
    }

    pub fn extract(&self, stats: &BaumWelchStats) -> Result<IVector> {
        self.tv.check(stats)?;
        let post = self.posterior(stats);
        Ok(IVector {
            w: Array1::from_iter(post.mean.iter().copied()),
            source_id: stats.source_id.clone(),
            feature_kind: stats.feature_kind,
        })
    }
}

fn flatten(f: ArrayView2<'_, f64>) -> Array1<f64> {
    Array1::from_iter(f.iter().copied())
}

/// Posterior-mean i-vector of `stats` under `tv`.
pub fn extract_ivector(tv: &TotalVariability, stats: &BaumWelchStats) -> Result<IVector> {
    tv.extractor().extract(stats)
}

/// Latent-factor representation of one utterance or speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IVector {
    pub w: Array1<f64>,
    pub source_id: String,
    pub feature_kind: FeatureKind,
}

impl IVector {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Scales to unit Euclidean norm; the zero vector is returned unchanged.
    pub fn length_normalized(mut self) -> Self {
        let norm = self.w.dot(&self.w).sqrt();
        if norm > 0.0 {
            self.w /= norm;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvConfig {
    pub rank: usize,
    pub n_iters: usize,
    pub seed: u64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self { rank: 100, n_iters: 10, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TvTraining {
    pub model: TotalVariability,
    /// Summed per-utterance objective before the first update and after each
    /// EM iteration.
    pub objective: Vec<f64>,
}

/// Trains `T` by EM from a seeded Gaussian start.
pub fn train_tv(ubm: &DiagGmm, stats: &[BaumWelchStats], config: &TvConfig) -> Result<TvTraining> {
    let cd = ubm.num_components() * ubm.dim();
    if config.rank == 0 || config.rank > cd {
        return Err(Error::InvalidArgument(format!("rank {} must be in 1..={cd}", config.rank)));
    }
    let scale = 0.1 * ubm.variances().mean().expect("non-empty").sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let t = Array2::from_shape_simple_fn((cd, config.rank), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    });
    train_tv_from(TotalVariability::from_ubm(ubm, t)?, stats, config.n_iters)
}

const UTTERANCE_CHUNK: usize = 64;

struct EStep {
    objective: f64,
    /// `sum_i F_i w_i'`, C*D x R.
    fw: Array2<f64>,
    /// Row c holds `sum_i N_ic E[w_i w_i']` flattened, C x R*R.
    second: Array2<f64>,
}

fn e_step(tv: &TotalVariability, stats: &[BaumWelchStats]) -> EStep {
    let (c, r) = (tv.num_components(), tv.rank());
    let cd = c * tv.dim();
    let ex = tv.extractor();
    let mut acc = EStep { objective: 0.0, fw: Array2::zeros((cd, r)), second: Array2::zeros((c, r * r)) };
    for chunk in stats.chunks(UTTERANCE_CHUNK) {
        let posts: Vec<Posterior> = chunk.par_iter().map(|s| ex.posterior(s)).collect();
        let u = chunk.len();
        let mut n = Array2::zeros((u, c));
        let mut f = Array2::zeros((u, cd));
        let mut w = Array2::zeros((u, r));
        let mut moments = Array2::zeros((u, r * r));
        for (i, (s, p)) in chunk.iter().zip(&posts).enumerate() {
            acc.objective += p.objective;
            n.row_mut(i).assign(&s.n);
            f.row_mut(i).assign(&flatten(s.f.view()));
            w.row_mut(i).assign(&Array1::from_iter(p.mean.iter().copied()));
            let m = &p.cov + &p.mean * p.mean.transpose();
            // nalgebra is column-major; m is symmetric so the order is moot
            moments.row_mut(i).assign(&Array1::from_iter(m.iter().copied()));
        }
        acc.fw += &f.t().dot(&w);
        acc.second += &n.t().dot(&moments);
    }
    acc
}

/// Runs `n_iters` EM iterations starting from `init`.
pub fn train_tv_from(init: TotalVariability, stats: &[BaumWelchStats], n_iters: usize) -> Result<TvTraining> {
    if stats.len() < 2 {
        return Err(Error::TooFew { what: "utterances for tv training", need: 2, got: stats.len() });
    }
    for s in stats {
        init.check(s)?;
    }
    let mut tv = init;
    let (c, d, r) = (tv.num_components(), tv.dim(), tv.rank());
    let mut objective = Vec::with_capacity(n_iters + 1);
    for _ in 0..n_iters {
        let acc = e_step(&tv, stats);
        objective.push(acc.objective);
        for k in 0..c {
            let a = DMatrix::from_row_slice(r, r, acc.second.row(k).as_slice().expect("contiguous"));
            let (chol, ridge) = cholesky_with_ridge(&a, 1e-8);
            if ridge > 0.0 {
                log::warn!("tv m-step: component {k} normal matrix regularised by {ridge:e}");
            }
            let rows = s![k * d..(k + 1) * d, ..];
            let rhs = to_na(acc.fw.slice(rows).t());
            let block = chol.solve(&rhs);
            tv.t.slice_mut(rows).assign(&from_na(&block).t());
        }
        if tv.t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tv matrix after m-step"));
        }
    }
    objective.push(e_step(&tv, stats).objective);
    Ok(TvTraining { model: tv, objective })
}
