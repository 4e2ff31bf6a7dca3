use std::f64::consts::PI;

use ndarray::Array2;

use super::features::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

/// First `n_out` rows of the orthonormal DCT-II matrix of size `n_in`.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let n = n_in as f64;
    Array2::from_shape_fn((n_out, n_in), |(k, j)| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (PI * k as f64 * (2 * j + 1) as f64 / (2.0 * n)).cos()
    })
}

/// Cepstra 0..n_ceps of each log-mel frame.
pub fn compute_mfcc(fbank: &FeatureMatrix, n_ceps: usize) -> Result<FeatureMatrix> {
    fbank.require_kind(FeatureKind::Filterbank)?;
    let n_mels = fbank.dim();
    if n_ceps == 0 || n_ceps > n_mels {
        return Err(Error::DimensionMismatch {
            what: "cepstra (must be within 1..=n_mels)",
            expected: n_mels,
            got: n_ceps,
        });
    }
    let dct = dct_matrix(n_ceps, n_mels);
    fbank.replace_frames(FeatureKind::Mfcc, fbank.frames().dot(&dct.t()))
}
