use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::{Error, Result};

pub(crate) const SYM_TOL: f64 = 1e-12;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    Ok(())
}

/// Eigen-decomposition of the symmetric part.
pub(crate) fn eigh(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let e = symmetrize(m).symmetric_eigen();
    (e.eigenvalues, e.eigenvectors)
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    eigh(m).0.min()
}

pub(crate) fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    eigh(m).0.max()
}

/// `V diag(f(lambda)) V^T`.
pub(crate) fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = eigh(m);
    let mapped = DVector::from_iterator(vals.len(), vals.iter().map(|&v| f(v)));
    &vecs * DMatrix::from_diagonal(&mapped) * vecs.transpose()
}

/// `ln det` of a symmetric positive definite matrix, or `None` when
/// Cholesky fails.
pub(crate) fn logdet_pd(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let chol = symmetrize(m).cholesky()?;
    let l = chol.l_dirty();
    let mut s = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) {
            return None;
        }
        s += d.ln();
    }
    Some(2.0 * s)
}

pub(crate) fn inverse_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    symmetrize(m)
        .cholesky()
        .map(|c| symmetrize(&c.inverse()))
        .ok_or(Error::Singular)
}

pub(crate) fn is_pd(m: &DMatrix<f64>) -> bool {
    m.nrows() == 0 || symmetrize(m).cholesky().is_some()
}

pub(crate) fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spectral_helpers() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_abs_diff_eq!(min_eigenvalue(&m), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(max_eigenvalue(&m), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(logdet_pd(&m).unwrap(), 3.0f64.ln(), epsilon = 1e-12);
        let root = spectral_map(&m, |v| v.sqrt());
        assert_abs_diff_eq!((&root * &root - &m).amax(), 0.0, epsilon = 1e-12);
        let inv = inverse_pd(&m).unwrap();
        assert_abs_diff_eq!((&inv * &m).trace(), 2.0, epsilon = 1e-12);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(logdet_pd(&sing).is_none() || logdet_pd(&sing).unwrap() < -30.0);
        assert!(check_symmetric(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]), SYM_TOL).is_err());
    }
}
