use std::ops::AddAssign;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::DiagGmm;
use crate::error::{Error, Result};
use crate::frontend::{FeatureKind, FeatureMatrix};

/// Zeroth and centred first order Baum-Welch statistics of one utterance
/// (or of any pooled set of frames).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaumWelchStats {
    /// Occupancy `N_c`.
    pub n: Array1<f64>,
    /// `F_c = sum_t gamma_t(c) (x_t - m_c)`, C x D.
    pub f: Array2<f64>,
    pub total_frames: usize,
    pub source_id: String,
    pub feature_kind: FeatureKind,
}

impl BaumWelchStats {
    pub fn zeros(source_id: impl Into<String>, feature_kind: FeatureKind, c: usize, d: usize) -> Self {
        Self {
            n: Array1::zeros(c),
            f: Array2::zeros((c, d)),
            total_frames: 0,
            source_id: source_id.into(),
            feature_kind,
        }
    }

    pub fn num_components(&self) -> usize {
        self.n.len()
    }

    pub fn dim(&self) -> usize {
        self.f.ncols()
    }
}

impl AddAssign<&BaumWelchStats> for BaumWelchStats {
    fn add_assign(&mut self, other: &BaumWelchStats) {
        assert_eq!(self.f.raw_dim(), other.f.raw_dim(), "statistics shapes differ");
        self.n += &other.n;
        self.f += &other.f;
        self.total_frames += other.total_frames;
        if self.source_id.is_empty() {
            self.source_id = other.source_id.clone();
        } else if !other.source_id.is_empty() {
            self.source_id = format!("{}+{}", self.source_id, other.source_id);
        }
    }
}

/// Accumulates Baum-Welch statistics of `features` against `ubm`.
pub fn accumulate_stats(ubm: &DiagGmm, features: &FeatureMatrix) -> Result<BaumWelchStats> {
    if features.dim() != ubm.dim() {
        return Err(Error::DimensionMismatch { what: "stats features", expected: ubm.dim(), got: features.dim() });
    }
    let acc = ubm.accumulate(features.frames().view());
    let mut f = acc.sx;
    for (mut row, (&n, mean)) in f.rows_mut().into_iter().zip(acc.n.iter().zip(ubm.means().rows())) {
        row.scaled_add(-n, &mean);
    }
    Ok(BaumWelchStats {
        n: acc.n,
        f,
        total_frames: features.num_frames(),
        source_id: features.utterance_id().to_string(),
        feature_kind: features.kind(),
    })
}
