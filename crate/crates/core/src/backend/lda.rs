use std::collections::BTreeMap;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_na, sorted_symmetric_eigen, to_na};

/// Fisher discriminant projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    /// D x K, unit-norm columns.
    pub projection: Array2<f64>,
    /// Sorted class labels; row `i` of `class_means` belongs to `classes[i]`.
    pub classes: Vec<usize>,
    /// Projected class means, classes x K.
    pub class_means: Array2<f64>,
    /// Generalised eigenvalues of the kept directions, descending.
    pub eigenvalues: Vec<f64>,
    /// True when the leading eigenvalue is numerically zero (no between-class
    /// scatter to exploit).
    pub degenerate: bool,
}

impl LdaModel {
    pub fn output_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.projection.nrows() {
            return Err(Error::DimensionMismatch { what: "lda input", expected: self.projection.nrows(), got: x.ncols() });
        }
        Ok(x.dot(&self.projection))
    }
}

/// Fits LDA with `k` output dimensions (default: classes - 1). The
/// within-class scatter is shrunk by `1e-6 tr(S_w) / D` before inversion.
pub fn lda_fit(x: ArrayView2<'_, f64>, labels: &[usize], k: Option<usize>) -> Result<LdaModel> {
    let (n, d) = x.dim();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { what: "lda labels", expected: n, got: labels.len() });
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::DegenerateLabels(format!("lda needs at least 2 classes, got {}", groups.len())));
    }
    if let Some(idx) = groups.values().find(|idx| idx.len() < 2) {
        return Err(Error::TooFew { what: "samples in an lda class", need: 2, got: idx.len() });
    }
    let max_k = (groups.len() - 1).min(d);
    let k = k.unwrap_or(max_k);
    if k == 0 || k > max_k {
        return Err(Error::InvalidArgument(format!("lda dimension {k} must be in 1..={max_k}")));
    }

    let global = x.mean_axis(Axis(0)).expect("non-empty");
    let mut sw = Array2::<f64>::zeros((d, d));
    let mut sb = Array2::<f64>::zeros((d, d));
    let mut means = Vec::new();
    for idx in groups.values() {
        let xc = x.select(Axis(0), idx);
        let mean = xc.mean_axis(Axis(0)).expect("non-empty");
        let centered = &xc - &mean;
        sw += &centered.t().dot(&centered);
        let diff = (&mean - &global).insert_axis(Axis(1));
        sb += &(diff.dot(&diff.t()) * idx.len() as f64);
        means.push(mean);
    }
    let shrink = 1e-6 * sw.diag().sum() / d as f64;
    let shrink = if shrink > 0.0 { shrink } else { 1e-12 };
    let mut sw_na = to_na(sw.view());
    for i in 0..d {
        sw_na[(i, i)] += shrink;
    }
    let chol = sw_na.cholesky().ok_or(Error::NonFinite("within-class scatter"))?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or(Error::NonFinite("within-class scatter"))?;
    let m = &l_inv * to_na(sb.view()) * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let (values, vectors) = sorted_symmetric_eigen(m);
    let v = vectors.columns(0, k).into_owned();
    let mut proj: DMatrix<f64> = l_inv.transpose() * v;
    for mut col in proj.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
        let pivot = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    let projection = from_na(&proj);
    let class_means = Array2::from_shape_fn((groups.len(), k), |(c, j)| means[c].dot(&projection.column(j)));
    let scale = values.iter().map(|v| v.abs()).sum::<f64>();
    let degenerate = values[0] <= 1e-9 * scale.max(1e-300) || values[0] <= 1e-12;
    Ok(LdaModel {
        projection,
        classes: groups.keys().copied().collect(),
        class_means,
        eigenvalues: values[..k].to_vec(),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt())
    }

    fn two_class(shift: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Normal::new(0.0, 1.0).unwrap();
        let dir = array![0.6, -0.8, 0.0];
        let x = Array2::from_shape_fn((400, 3), |(i, j)| g.sample(&mut rng) + if i >= 200 { shift * dir[j] } else { 0.0 });
        (x, (0..400).map(|i| usize::from(i >= 200)).collect())
    }

    #[test]
    fn binary_direction_follows_mean_difference() {
        let (x, y) = two_class(4.0, 1);
        let m = lda_fit(x.view(), &y, None).unwrap();
        assert_eq!(m.output_dim(), 1);
        let cos = cosine(&m.projection.column(0).to_owned(), &array![0.6, -0.8, 0.0]);
        assert!(cos.abs() > 0.99, "{cos}");
        assert!(!m.degenerate);
    }

    #[test]
    fn identical_means_flagged() {
        let x = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [2.0, 0.0], [-2.0, 0.0], [0.0, 2.0], [0.0, -2.0]];
        let y = [0, 0, 0, 0, 1, 1, 1, 1];
        let m = lda_fit(x.view(), &y, None).unwrap();
        assert!(m.degenerate);
        assert!(m.eigenvalues[0].abs() < 1e-9);
    }

    #[test]
    fn k_bounded_by_classes() {
        let (x, y) = two_class(4.0, 2);
        assert!(lda_fit(x.view(), &y, Some(2)).is_err());
        assert!(lda_fit(x.view(), &[0; 400], None).is_err());
    }

    #[test]
    fn translation_invariant_up_to_sign_and_scale() {
        let (x, y) = two_class(3.0, 3);
        let a = lda_fit(x.view(), &y, None).unwrap();
        let b = lda_fit((&x + 17.5).view(), &y, None).unwrap();
        let cos = cosine(&a.projection.column(0).to_owned(), &b.projection.column(0).to_owned());
        assert!(cos.abs() > 1.0 - 1e-9);
    }
}
