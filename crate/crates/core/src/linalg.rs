//! Small dense helpers bridging `ndarray` storage and `nalgebra` factorisations.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use ndarray::{Array2, ArrayView2};

pub(crate) fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}


/// Cholesky of a symmetric positive (semi)definite matrix, adding `ridge * I`
/// until it succeeds. Returns the factor and the ridge that was needed.
pub(crate) fn cholesky_with_ridge(m: &DMatrix<f64>, ridge: f64) -> (Cholesky<f64, Dyn>, f64) {
    if let Some(c) = Cholesky::new(m.clone()) {
        return (c, 0.0);
    }
    let scale = (m.trace().abs() / m.nrows().max(1) as f64).max(1.0);
    let mut added = ridge * scale;
    loop {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += added;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return (c, added);
        }
        added *= 10.0;
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenpairs sorted by
/// decreasing eigenvalue.
pub(crate) fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}
