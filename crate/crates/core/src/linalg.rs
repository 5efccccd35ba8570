//! Small dense helpers on top of nalgebra shared by the numerical modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest absolute entry, 0 for an empty matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs_diff(m, &m.transpose())
}

/// Averages `m` with its transpose.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
///
/// Each eigenvector is reflected so that its largest-magnitude entry is
/// positive; ties keep the solver's ordering (stable sort).
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let lead = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if lead < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric square-root factor `A` with `A Aᵀ = m` for a PSD `m`.
/// Eigenvalues below zero (rounding) are clamped.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(m);
    let scale = DMatrix::from_diagonal(&vals.map(|v| v.max(0.0).sqrt()));
    &vecs * scale * vecs.transpose()
}

/// `log det` and inverse of a symmetric positive-definite matrix.
pub fn spd_logdet_inverse(m: &DMatrix<f64>, what: &str) -> Result<(f64, DMatrix<f64>)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((logdet, chol.inverse()))
}

/// Column means of an `n x k` matrix.
pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Subtracts column means in place.
pub fn center_columns(m: &mut DMatrix<f64>) {
    let means = column_means(m);
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
}

/// Cross-covariance `aᵀb / n` of two centred score matrices with the same
/// number of rows (population divisor).
pub fn cross_moment(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * b / a.nrows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_descending_with_sign_convention() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, -1.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        assert!((vals[2] + 1.0).abs() < 1e-12);
        for col in vecs.column_iter() {
            let lead = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(lead > 0.0);
        }
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!(max_abs_diff(&rebuilt, &m) < 1e-12);
    }

    #[test]
    fn psd_sqrt_reconstructs() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let a = psd_sqrt(&m);
        assert!(max_abs_diff(&(&a * a.transpose()), &m) < 1e-12);
    }

    #[test]
    fn logdet_matches_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 0.5]));
        let (ld, inv) = spd_logdet_inverse(&m, "test").unwrap();
        assert!((ld - 3.0_f64.ln()).abs() < 1e-14);
        assert!((inv[(1, 1)] - 1.0 / 3.0).abs() < 1e-14);
        assert!(spd_logdet_inverse(&(-m), "neg").is_err());
    }
}
